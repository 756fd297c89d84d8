//! Shape-to-key-range planning.
//!
//! Each grid row that a shape touches becomes one inclusive key range. Rows
//! are never merged, even when the end of one row's range happens to be
//! adjacent to the start of the next: that would pull in cells outside the
//! shape's horizontal extent.

use std::fmt;

use thiserror::Error;

use crate::geometry::{GeoShape, GeometryError, SpanMode};
use crate::grid::{CellCoord, GridConfig, GridError, HashKey};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("shape does not intersect the world extent; nothing to plan")]
    EmptyPlan,
    #[error(transparent)]
    Geometry(GeometryError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl From<GeometryError> for PlanError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::EmptyIntersection => PlanError::EmptyPlan,
            other => PlanError::Geometry(other),
        }
    }
}

/// Inclusive key range covering part of one grid row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Segment {
    pub key_lo: HashKey,
    pub key_hi: HashKey,
    pub row: u64,
}

impl Segment {
    /// Number of cells in the range.
    pub fn cells(&self) -> u64 {
        self.key_hi.0 - self.key_lo.0 + 1
    }

    pub fn contains(&self, key: HashKey) -> bool {
        self.key_lo <= key && key <= self.key_hi
    }
}

/// Disjoint segments sorted by `key_lo`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmentPlan {
    segments: Vec<Segment>,
}

impl SegmentPlan {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Segment count `S`.
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Total number of cells covered by the plan.
    pub fn covered_cells(&self) -> u64 {
        self.segments.iter().map(Segment::cells).sum()
    }

    pub fn covers(&self, key: HashKey) -> bool {
        let idx = self.segments.partition_point(|s| s.key_hi < key);
        self.segments.get(idx).is_some_and(|s| s.contains(key))
    }
}

/// One `cy key_lo key_hi` line per segment.
impl fmt::Display for SegmentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.segments {
            writeln!(f, "{} {} {}", s.row, s.key_lo, s.key_hi)?;
        }
        Ok(())
    }
}

/// Splits `shape` into per-row key ranges over `cfg`.
pub fn plan(shape: &GeoShape, cfg: &GridConfig, mode: SpanMode) -> Result<SegmentPlan, PlanError> {
    let (row_lo, row_hi) = shape.row_range(cfg)?;
    let mut segments = Vec::with_capacity((row_hi - row_lo + 1) as usize);
    for cy in row_lo..=row_hi {
        let Some((x_lo, x_hi)) = shape.row_span(cy, cfg, mode)? else {
            continue;
        };
        let key_lo = cfg.hash_of_cell(CellCoord::new(cfg.col_of_clamped(x_lo), cy))?;
        let key_hi = cfg.hash_of_cell(CellCoord::new(cfg.col_of_clamped(x_hi), cy))?;
        segments.push(Segment { key_lo, key_hi, row: cy });
    }
    Ok(SegmentPlan { segments })
}
