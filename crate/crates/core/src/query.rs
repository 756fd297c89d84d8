//! Shape queries under the four access models.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{GeoShape, GeometryError, SpanMode};
use crate::grid::{CellCoord, GridConfig};
use crate::segmenter::{self, PlanError, Segment};
use crate::store::{CostCounters, Entity, Store, StoreError};

#[derive(Debug, Error)]
pub enum QueryError {
    #[error("query shape does not intersect the world extent")]
    EmptyIntersection,
    #[error("store was built for a different grid configuration")]
    ConfigMismatch,
    #[error(transparent)]
    Plan(PlanError),
    #[error(transparent)]
    Geometry(GeometryError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl From<PlanError> for QueryError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::EmptyPlan => QueryError::EmptyIntersection,
            other => QueryError::Plan(other),
        }
    }
}

impl From<GeometryError> for QueryError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::EmptyIntersection => QueryError::EmptyIntersection,
            other => QueryError::Geometry(other),
        }
    }
}

/// Data access model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    /// Plain coordinates, no index: full scan then filter.
    Raw,
    /// Single-axis projection: scan a vertical band then filter.
    Projection,
    /// One bucket lookup per cell of the shape's bounding box.
    Grid,
    /// Per-row key ranges fetched concurrently.
    Gaia,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Raw, ModelKind::Projection, ModelKind::Grid, ModelKind::Gaia];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Raw => "raw",
            ModelKind::Projection => "projection",
            ModelKind::Grid => "grid",
            ModelKind::Gaia => "gaia",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" | "coordinates" => Ok(ModelKind::Raw),
            "projection" => Ok(ModelKind::Projection),
            "grid" => Ok(ModelKind::Grid),
            "gaia" => Ok(ModelKind::Gaia),
            other => Err(format!("unknown model `{other}` (expected raw, projection, grid or gaia)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct QueryOptions {
    pub mode: SpanMode,
    /// Post-filter every model's output with exact shape membership.
    pub exact: bool,
    /// Maximum number of concurrent segment fetches; `None` means one task
    /// per segment.
    pub fanout_limit: Option<usize>,
}

impl QueryOptions {
    pub fn exact(mode: SpanMode) -> Self {
        Self {
            mode,
            exact: true,
            fanout_limit: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct QueryResult {
    /// Sorted by id, no duplicates.
    pub entities: Vec<Entity>,
    pub counters: CostCounters,
    pub elapsed: Duration,
    /// Whether every entity was checked against the shape.
    pub exact: bool,
}

impl QueryResult {
    pub fn ids(&self) -> Vec<u64> {
        self.entities.iter().map(|e| e.id).collect()
    }
}

/// Runs `shape` against `store` under `model`.
pub fn query(
    store: &Store,
    cfg: &GridConfig,
    shape: &GeoShape,
    model: ModelKind,
    opts: &QueryOptions,
) -> Result<QueryResult, QueryError> {
    let start = Instant::now();
    if store.config() != cfg {
        return Err(QueryError::ConfigMismatch);
    }
    shape.clipped_bbox(cfg)?;
    let mut counters = CostCounters::default();
    let (mut entities, filtered) = match model {
        ModelKind::Raw => (store.full_scan(&mut counters), true),
        ModelKind::Projection => {
            let (col_lo, col_hi) = shape.col_range(cfg)?;
            (store.projection_scan(col_lo, col_hi, &mut counters)?, true)
        }
        ModelKind::Grid => {
            let (row_lo, row_hi) = shape.row_range(cfg)?;
            let (col_lo, col_hi) = shape.col_range(cfg)?;
            let mut out = Vec::new();
            for cy in row_lo..=row_hi {
                for cx in col_lo..=col_hi {
                    out.extend(store.cell_get(CellCoord::new(cx, cy), &mut counters)?);
                }
            }
            (out, opts.exact)
        }
        ModelKind::Gaia => (gaia_fetch(store, cfg, shape, opts, &mut counters)?, opts.exact),
    };
    if filtered {
        entities.retain(|e| shape.contains(e.point));
    }
    entities.sort_unstable_by_key(|e| e.id);
    entities.dedup_by_key(|e| e.id);
    Ok(QueryResult {
        entities,
        counters,
        elapsed: start.elapsed(),
        exact: filtered,
    })
}

/// Plans the shape, fetches every segment concurrently and waits for all of
/// them before gathering.
fn gaia_fetch(
    store: &Store,
    cfg: &GridConfig,
    shape: &GeoShape,
    opts: &QueryOptions,
    counters: &mut CostCounters,
) -> Result<Vec<Entity>, QueryError> {
    let plan = segmenter::plan(shape, cfg, opts.mode)?;
    let segments = plan.segments();
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let width = opts.fanout_limit.unwrap_or(segments.len()).clamp(1, segments.len());
    let per_task = segments.len().div_ceil(width);
    let fetch = |chunk: &[Segment]| {
        let mut local = CostCounters::default();
        let mut rows = Vec::new();
        for seg in chunk {
            rows.extend(store.range_scan(seg.key_lo, seg.key_hi, &mut local)?);
        }
        Ok((rows, local))
    };
    let parts = if width == 1 {
        vec![fetch(segments)?]
    } else {
        segments.par_chunks(per_task).map(fetch).collect::<Result<Vec<_>, StoreError>>()?
    };
    let mut out = Vec::with_capacity(parts.iter().map(|(r, _)| r.len()).sum());
    for (rows, local) in parts {
        *counters += local;
        out.extend(rows);
    }
    Ok(out)
}

/// Ground truth: every stored entity inside the shape, sorted by id.
pub fn oracle(store: &Store, shape: &GeoShape) -> Vec<Entity> {
    let mut out: Vec<Entity> = store.entities().iter().filter(|e| shape.contains(e.point)).cloned().collect();
    out.sort_unstable_by_key(|e| e.id);
    out
}
