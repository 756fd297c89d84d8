//! World grid and the 2D-to-1D key transform.
//!
//! The world is a finite rectangle `[min_d, max_d] × [min_h, max_h]` cut into
//! square cells of side `c`. A point maps to the cell that contains it, and a
//! cell maps to a row-major key `cx + cy·d`, so the cells of one grid row are
//! consecutive keys in the 1D space.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid configuration: {0}")]
    InvalidConfig(String),
    #[error("{axis} coordinate {value} outside world bounds [{min}, {max}]")]
    OutOfBounds {
        axis: char,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("cell ({cx}, {cy}) outside grid {cols}x{rows}")]
    CellOutOfRange {
        cx: u64,
        cy: u64,
        cols: u64,
        rows: u64,
    },
    #[error("hash key {key} outside key space [0, {limit})")]
    KeyOutOfRange { key: u64, limit: u64 },
    #[error("grid config parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("grid config i/o error: {0}")]
    Io(String),
}

/// A location in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Discrete cell position, column `cx` and row `cy`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellCoord {
    pub cx: u64,
    pub cy: u64,
}

impl CellCoord {
    pub const fn new(cx: u64, cy: u64) -> Self {
        Self { cx, cy }
    }
}

/// Linearized cell key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HashKey(pub u64);

impl fmt::Display for HashKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// World extent and cell decomposition.
///
/// Construct through [`GridConfig::new`], which enforces
/// `max > min` on both axes and `0 < cell_side <= min(width, height)`.
/// The discrete dimensions use ceiling division so the cells always cover
/// the whole extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig {
    min_d: f64,
    max_d: f64,
    min_h: f64,
    max_h: f64,
    cell_side: f64,
    cols: u64,
    rows: u64,
}

impl GridConfig {
    pub fn new(min_d: f64, max_d: f64, min_h: f64, max_h: f64, cell_side: f64) -> Result<Self, GridError> {
        let all = [min_d, max_d, min_h, max_h, cell_side];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(GridError::InvalidConfig("all bounds must be finite".into()));
        }
        if max_d <= min_d {
            return Err(GridError::InvalidConfig(format!("max_d {max_d} must exceed min_d {min_d}")));
        }
        if max_h <= min_h {
            return Err(GridError::InvalidConfig(format!("max_h {max_h} must exceed min_h {min_h}")));
        }
        let width = max_d - min_d;
        let height = max_h - min_h;
        if cell_side <= 0.0 || cell_side > width.min(height) {
            return Err(GridError::InvalidConfig(format!(
                "cell_side {cell_side} must lie in (0, {}]",
                width.min(height)
            )));
        }
        let cols = (width / cell_side).ceil() as u64;
        let rows = (height / cell_side).ceil() as u64;
        if cols.checked_mul(rows).is_none() {
            return Err(GridError::InvalidConfig("cell count overflows the key space".into()));
        }
        Ok(Self {
            min_d,
            max_d,
            min_h,
            max_h,
            cell_side,
            cols: cols.max(1),
            rows: rows.max(1),
        })
    }

    /// Square world `[0, side]²` with the given cell side.
    pub fn square(side: f64, cell_side: f64) -> Result<Self, GridError> {
        Self::new(0.0, side, 0.0, side, cell_side)
    }

    pub fn min_d(&self) -> f64 {
        self.min_d
    }
    pub fn max_d(&self) -> f64 {
        self.max_d
    }
    pub fn min_h(&self) -> f64 {
        self.min_h
    }
    pub fn max_h(&self) -> f64 {
        self.max_h
    }
    pub fn cell_side(&self) -> f64 {
        self.cell_side
    }

    /// Continuous width `D`.
    pub fn width(&self) -> f64 {
        self.max_d - self.min_d
    }

    /// Continuous height `H`.
    pub fn height(&self) -> f64 {
        self.max_h - self.min_h
    }

    /// Discrete width `d`.
    pub fn cols(&self) -> u64 {
        self.cols
    }

    /// Discrete height `h`.
    pub fn rows(&self) -> u64 {
        self.rows
    }

    /// Size of the key space, `d·h`.
    pub fn cell_count(&self) -> u64 {
        self.cols * self.rows
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.min_d..=self.max_d).contains(&p.x) && (self.min_h..=self.max_h).contains(&p.y)
    }

    /// Column of an x coordinate, clamped into `[0, d-1]`.
    pub(crate) fn col_of_clamped(&self, x: f64) -> u64 {
        axis_index(x, self.min_d, self.cell_side, self.cols)
    }

    /// Row of a y coordinate, clamped into `[0, h-1]`.
    pub(crate) fn row_of_clamped(&self, y: f64) -> u64 {
        axis_index(y, self.min_h, self.cell_side, self.rows)
    }

    /// Lower y edge of row `cy`.
    pub(crate) fn row_bottom(&self, cy: u64) -> f64 {
        self.min_h + cy as f64 * self.cell_side
    }

    pub fn cell_of(&self, p: Point) -> Result<CellCoord, GridError> {
        check_axis('x', p.x, self.min_d, self.max_d)?;
        check_axis('y', p.y, self.min_h, self.max_h)?;
        Ok(CellCoord::new(self.col_of_clamped(p.x), self.row_of_clamped(p.y)))
    }

    pub fn hash_of_cell(&self, cc: CellCoord) -> Result<HashKey, GridError> {
        if cc.cx >= self.cols || cc.cy >= self.rows {
            return Err(GridError::CellOutOfRange {
                cx: cc.cx,
                cy: cc.cy,
                cols: self.cols,
                rows: self.rows,
            });
        }
        Ok(HashKey(cc.cx + cc.cy * self.cols))
    }

    pub fn hash_of(&self, p: Point) -> Result<HashKey, GridError> {
        self.cell_of(p).and_then(|cc| self.hash_of_cell(cc))
    }

    pub fn cell_of_hash(&self, key: HashKey) -> Result<CellCoord, GridError> {
        let limit = self.cell_count();
        if key.0 >= limit {
            return Err(GridError::KeyOutOfRange { key: key.0, limit });
        }
        Ok(CellCoord::new(key.0 % self.cols, key.0 / self.cols))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GridError> {
        let text = fs::read_to_string(path.as_ref())
            .map_err(|e| GridError::Io(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), GridError> {
        fs::write(path.as_ref(), self.to_string())
            .map_err(|e| GridError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

fn check_axis(axis: char, value: f64, min: f64, max: f64) -> Result<(), GridError> {
    if (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(GridError::OutOfBounds { axis, value, min, max })
    }
}

fn axis_index(v: f64, min: f64, side: f64, count: u64) -> u64 {
    let raw = ((v - min) / side).floor();
    if raw <= 0.0 {
        0
    } else {
        (raw as u64).min(count - 1)
    }
}

/// `key = value` lines; `#` starts a comment.
impl FromStr for GridConfig {
    type Err = GridError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut fields: [Option<f64>; 5] = [None; 5];
        const NAMES: [&str; 5] = ["min_d", "max_d", "min_h", "max_h", "cell_side"];
        for (idx, raw) in s.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| GridError::Parse {
                line: line_no,
                msg: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let slot = NAMES.iter().position(|n| *n == key).ok_or_else(|| GridError::Parse {
                line: line_no,
                msg: format!("unknown key `{key}`"),
            })?;
            if fields[slot].is_some() {
                return Err(GridError::Parse {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            let v: f64 = value.trim().parse().map_err(|_| GridError::Parse {
                line: line_no,
                msg: format!("`{}` is not a decimal number", value.trim()),
            })?;
            fields[slot] = Some(v);
        }
        let mut vals = [0.0; 5];
        for (i, f) in fields.iter().enumerate() {
            vals[i] = f.ok_or_else(|| GridError::Parse {
                line: 0,
                msg: format!("missing key `{}`", NAMES[i]),
            })?;
        }
        GridConfig::new(vals[0], vals[1], vals[2], vals[3], vals[4])
    }
}

impl fmt::Display for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "min_d = {:?}", self.min_d)?;
        writeln!(f, "max_d = {:?}", self.max_d)?;
        writeln!(f, "min_h = {:?}", self.min_h)?;
        writeln!(f, "max_h = {:?}", self.max_h)?;
        writeln!(f, "cell_side = {:?}", self.cell_side)
    }
}
