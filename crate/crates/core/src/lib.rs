//! Geographic key linearization and segment-parallel range queries.
//!
//! The world rectangle is cut into square cells whose row-major index is used
//! as the storage key, so every grid row of a query region is one contiguous
//! key range. A query region becomes a short list of such ranges
//! ([`segmenter::plan`]) that are fetched concurrently from an ordered store
//! ([`query::query`]). Three baseline access models (raw coordinates,
//! single-axis projection, per-cell grid buckets) run over the same store for
//! comparison, and [`bench`] / [`analysis`] drive and evaluate the latency
//! matrix.

pub mod analysis;
pub mod bench;
pub mod geometry;
pub mod grid;
pub mod query;
pub mod segmenter;
pub mod store;
pub mod workload;

pub use geometry::{GeoShape, SpanMode};
pub use grid::{CellCoord, GridConfig, HashKey, Point};
pub use query::{ModelKind, QueryOptions, QueryResult};
pub use segmenter::{Segment, SegmentPlan};
pub use store::{CostCounters, Entity, Store};
