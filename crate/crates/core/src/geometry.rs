//! Query regions: membership tests and per-row horizontal spans.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::{GridConfig, Point};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("shape does not intersect the world extent")]
    EmptyIntersection,
    #[error("row {cy} outside the shape's row range [{lo}, {hi}]")]
    RowOutOfRange { cy: u64, lo: u64, hi: u64 },
    #[error("malformed shape literal `{literal}`: {msg}")]
    Parse { literal: String, msg: String },
}

/// How wide a row segment is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum SpanMode {
    /// The shape's full horizontal extent on every row.
    #[default]
    Bounding,
    /// The exact horizontal extent of the shape inside the row band.
    Tight,
}

impl FromStr for SpanMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bounding" => Ok(SpanMode::Bounding),
            "tight" => Ok(SpanMode::Tight),
            other => Err(format!("unknown span mode `{other}` (expected bounding or tight)")),
        }
    }
}

impl fmt::Display for SpanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpanMode::Bounding => "bounding",
            SpanMode::Tight => "tight",
        })
    }
}

/// A geographic query region.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoShape {
    Disc { center: Point, radius: f64 },
    Rect { lo: Point, hi: Point },
    Polygon(Vec<Point>),
}

impl GeoShape {
    /// A radius of zero is accepted and behaves as a point lookup.
    pub fn disc(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !center.x.is_finite() || !center.y.is_finite() || !radius.is_finite() || radius < 0.0 {
            return Err(GeometryError::InvalidShape(format!(
                "disc needs a finite center and radius >= 0, got ({}, {}) r={radius}",
                center.x, center.y
            )));
        }
        Ok(GeoShape::Disc { center, radius })
    }

    pub fn rect(lo: Point, hi: Point) -> Result<Self, GeometryError> {
        let finite = [lo.x, lo.y, hi.x, hi.y].iter().all(|v| v.is_finite());
        if !finite || lo.x >= hi.x || lo.y >= hi.y {
            return Err(GeometryError::InvalidShape(format!(
                "rect needs lo < hi on both axes, got ({}, {})-({}, {})",
                lo.x, lo.y, hi.x, hi.y
            )));
        }
        Ok(GeoShape::Rect { lo, hi })
    }

    /// Accepts an open or explicitly closed ring; rejects self-intersecting rings.
    pub fn polygon(mut vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() > 1 && vertices.first() == vertices.last() {
            vertices.pop();
        }
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidShape("polygon needs at least 3 vertices".into()));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::InvalidShape("polygon vertices must be finite".into()));
        }
        if polygon_area2(&vertices) == 0.0 {
            return Err(GeometryError::InvalidShape("polygon has zero area".into()));
        }
        let n = vertices.len();
        for i in 0..n {
            let (a1, a2) = (vertices[i], vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (b1, b2) = (vertices[j], vertices[(j + 1) % n]);
                if segments_intersect(a1, a2, b1, b2) {
                    return Err(GeometryError::InvalidShape(format!(
                        "polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        Ok(GeoShape::Polygon(vertices))
    }

    /// Exact membership; boundaries count as inside.
    pub fn contains(&self, p: Point) -> bool {
        match self {
            GeoShape::Disc { center, radius } => {
                let dx = p.x - center.x;
                let dy = p.y - center.y;
                dx * dx + dy * dy <= radius * radius
            }
            GeoShape::Rect { lo, hi } => p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y,
            GeoShape::Polygon(vs) => polygon_contains(vs, p),
        }
    }

    /// Axis-aligned bounding box as `(min, max)` corners.
    pub fn bbox(&self) -> (Point, Point) {
        match self {
            GeoShape::Disc { center, radius } => (
                Point::new(center.x - radius, center.y - radius),
                Point::new(center.x + radius, center.y + radius),
            ),
            GeoShape::Rect { lo, hi } => (*lo, *hi),
            GeoShape::Polygon(vs) => {
                let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
                let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
                for v in vs {
                    lo.x = lo.x.min(v.x);
                    lo.y = lo.y.min(v.y);
                    hi.x = hi.x.max(v.x);
                    hi.y = hi.y.max(v.y);
                }
                (lo, hi)
            }
        }
    }

    /// Bounding box clipped to the world, or an error if they do not meet.
    pub fn clipped_bbox(&self, cfg: &GridConfig) -> Result<(Point, Point), GeometryError> {
        let (lo, hi) = self.bbox();
        let clo = Point::new(lo.x.max(cfg.min_d()), lo.y.max(cfg.min_h()));
        let chi = Point::new(hi.x.min(cfg.max_d()), hi.y.min(cfg.max_h()));
        if clo.x > chi.x || clo.y > chi.y {
            return Err(GeometryError::EmptyIntersection);
        }
        Ok((clo, chi))
    }

    /// Inclusive range of grid rows touched by the shape's clipped y-extent.
    pub fn row_range(&self, cfg: &GridConfig) -> Result<(u64, u64), GeometryError> {
        let (lo, hi) = self.clipped_bbox(cfg)?;
        Ok((cfg.row_of_clamped(lo.y), cfg.row_of_clamped(hi.y)))
    }

    /// Inclusive range of grid columns touched by the shape's clipped x-extent.
    pub fn col_range(&self, cfg: &GridConfig) -> Result<(u64, u64), GeometryError> {
        let (lo, hi) = self.clipped_bbox(cfg)?;
        Ok((cfg.col_of_clamped(lo.x), cfg.col_of_clamped(hi.x)))
    }

    /// Horizontal extent `(x_lo, x_hi)` to fetch on row `cy`, clamped to the
    /// world. `None` when the shape has nothing inside the world on that row.
    pub fn row_span(&self, cy: u64, cfg: &GridConfig, mode: SpanMode) -> Result<Option<(f64, f64)>, GeometryError> {
        let (lo_row, hi_row) = self.row_range(cfg)?;
        if cy < lo_row || cy > hi_row {
            return Err(GeometryError::RowOutOfRange { cy, lo: lo_row, hi: hi_row });
        }
        let raw = match mode {
            SpanMode::Bounding => {
                let (lo, hi) = self.bbox();
                Some((lo.x, hi.x))
            }
            SpanMode::Tight => {
                let (lo, hi) = self.bbox();
                self.tight_span(cy, cfg).map(|(a, b)| (a.max(lo.x), b.min(hi.x)))
            }
        };
        Ok(raw.and_then(|(a, b)| {
            let a = a.max(cfg.min_d());
            let b = b.min(cfg.max_d());
            (a <= b).then_some((a, b))
        }))
    }

    fn tight_span(&self, cy: u64, cfg: &GridConfig) -> Option<(f64, f64)> {
        // closed band; the top of the last row is the world edge
        let y0 = cfg.row_bottom(cy);
        let y1 = (y0 + cfg.cell_side()).min(cfg.max_h());
        // rounding slack so boundary points never fall outside their span
        let eps = 1e-9 * cfg.cell_side();
        match self {
            GeoShape::Disc { center, radius } => {
                let dy = if center.y < y0 {
                    y0 - center.y
                } else if center.y > y1 {
                    center.y - y1
                } else {
                    0.0
                };
                if dy > *radius {
                    return None;
                }
                let w = (radius * radius - dy * dy).max(0.0).sqrt();
                Some((center.x - w - eps, center.x + w + eps))
            }
            GeoShape::Rect { lo, hi } => (lo.y <= y1 && hi.y >= y0).then_some((lo.x, hi.x)),
            GeoShape::Polygon(vs) => polygon_band_extent(vs, y0, y1).map(|(a, b)| (a - eps, b + eps)),
        }
    }
}

fn polygon_area2(vs: &[Point]) -> f64 {
    let n = vs.len();
    (0..n)
        .map(|i| {
            let (a, b) = (vs[i], vs[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum()
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn segments_intersect(a1: Point, a2: Point, b1: Point, b2: Point) -> bool {
    let d1 = cross(b1, b2, a1);
    let d2 = cross(b1, b2, a2);
    let d3 = cross(a1, a2, b1);
    let d4 = cross(a1, a2, b2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(b1, b2, a1) || on_segment(b1, b2, a2) || on_segment(a1, a2, b1) || on_segment(a1, a2, b2)
}

/// Even-odd rule with an explicit boundary check.
fn polygon_contains(vs: &[Point], p: Point) -> bool {
    let n = vs.len();
    let mut inside = false;
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        if on_segment(a, b, p) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

/// x-extent of the polygon restricted to the closed band `[y0, y1]`.
///
/// The extreme x values of polygon ∩ band lie on the boundary, either at a
/// vertex inside the band or where an edge crosses one of the band lines.
fn polygon_band_extent(vs: &[Point], y0: f64, y1: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut take = |x: f64| {
        lo = lo.min(x);
        hi = hi.max(x);
    };
    let n = vs.len();
    for i in 0..n {
        let a = vs[i];
        let b = vs[(i + 1) % n];
        if a.y >= y0 && a.y <= y1 {
            take(a.x);
        }
        for yl in [y0, y1] {
            if (a.y < yl && b.y > yl) || (a.y > yl && b.y < yl) {
                take(a.x + (yl - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn parse_f64(literal: &str, s: &str) -> Result<f64, GeometryError> {
    s.trim().parse().map_err(|_| GeometryError::Parse {
        literal: literal.to_string(),
        msg: format!("`{}` is not a number", s.trim()),
    })
}

fn parse_list(literal: &str, body: &str, expect: usize) -> Result<Vec<f64>, GeometryError> {
    let vals = body.split(',').map(|s| parse_f64(literal, s)).collect::<Result<Vec<_>, _>>()?;
    if vals.len() != expect {
        return Err(GeometryError::Parse {
            literal: literal.to_string(),
            msg: format!("expected {expect} numbers, got {}", vals.len()),
        });
    }
    Ok(vals)
}

/// `disc:px,py,R`, `rect:x1,y1,x2,y2` or `poly:x1,y1;x2,y2;...`.
impl FromStr for GeoShape {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lit = s.trim();
        let (kind, body) = lit.split_once(':').ok_or_else(|| GeometryError::Parse {
            literal: lit.to_string(),
            msg: "missing `kind:` prefix".into(),
        })?;
        let wrap = |e: GeometryError| match e {
            GeometryError::InvalidShape(msg) => GeometryError::Parse {
                literal: lit.to_string(),
                msg,
            },
            other => other,
        };
        match kind.trim().to_ascii_lowercase().as_str() {
            "disc" => {
                let v = parse_list(lit, body, 3)?;
                GeoShape::disc(Point::new(v[0], v[1]), v[2]).map_err(wrap)
            }
            "rect" => {
                let v = parse_list(lit, body, 4)?;
                let lo = Point::new(v[0].min(v[2]), v[1].min(v[3]));
                let hi = Point::new(v[0].max(v[2]), v[1].max(v[3]));
                GeoShape::rect(lo, hi).map_err(wrap)
            }
            "poly" => {
                let pts = body
                    .split(';')
                    .filter(|s| !s.trim().is_empty())
                    .map(|pair| parse_list(lit, pair, 2).map(|v| Point::new(v[0], v[1])))
                    .collect::<Result<Vec<_>, _>>()?;
                GeoShape::polygon(pts).map_err(wrap)
            }
            other => Err(GeometryError::Parse {
                literal: lit.to_string(),
                msg: format!("unknown shape kind `{other}`"),
            }),
        }
    }
}

impl fmt::Display for GeoShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoShape::Disc { center, radius } => write!(f, "disc:{},{},{}", center.x, center.y, radius),
            GeoShape::Rect { lo, hi } => write!(f, "rect:{},{},{},{}", lo.x, lo.y, hi.x, hi.y),
            GeoShape::Polygon(vs) => {
                f.write_str("poly:")?;
                for (i, v) in vs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(";")?;
                    }
                    write!(f, "{},{}", v.x, v.y)?;
                }
                Ok(())
            }
        }
    }
}
