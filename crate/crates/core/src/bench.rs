//! DSS × QPS latency matrix.
//!
//! A QPS level is realized as a closed batch: `qps` worker threads are
//! released together through a start gate and each runs one query from the
//! mix. ATD for a cell is the mean per-query elapsed time over every worker
//! of every timed trial. Elapsed time is measured end to end inside
//! [`query`], so it includes any wait for the shared fan-out pool. Timing
//! uses `std::time::Instant` (monotonic, sub-microsecond on Linux).

use std::io::{Read, Write};
use std::sync::RwLock;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeoShape, SpanMode};
use crate::grid::GridConfig;
use crate::query::{query, ModelKind, QueryOptions};
use crate::store::{Store, StoreError};
use crate::workload::{generate_entities, generate_queries, WorkloadError, WorkloadSpec};

const WORKER_STACK: usize = 256 * 1024;

pub const RESULTS_HEADER: [&str; 7] = ["model", "dss", "qps", "atd_seconds", "trials", "scanned_mean", "issued_mean"];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid matrix spec: {0}")]
    InvalidSpec(String),
    #[error("need at least {need} queries for qps={need}, have {have}")]
    NotEnoughQueries { need: usize, have: usize },
    #[error("unexpected results header `{0}`")]
    Header(String),
    #[error("worker failed: {0}")]
    WorkerFailed(String),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("results csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("results i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One measured (model, dss, qps) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(with = "model_serde")]
    pub model: ModelKind,
    pub dss: u64,
    pub qps: u64,
    #[serde(rename = "atd_seconds")]
    pub atd: f64,
    pub trials: u64,
    pub scanned_mean: f64,
    pub issued_mean: f64,
}

mod model_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::query::ModelKind;

    pub fn serialize<S: Serializer>(m: &ModelKind, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<ModelKind, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub trials: usize,
    pub query: QueryOptions,
    /// When false no latency is recorded (`atd = 0`) and the warm-up pass is
    /// skipped; counters are still collected.
    pub timing: bool,
}

impl Default for CellOptions {
    fn default() -> Self {
        Self {
            trials: 5,
            query: QueryOptions::exact(SpanMode::Bounding),
            timing: true,
        }
    }
}

/// Measures one cell: an optional discarded warm-up batch, then `trials`
/// batches of `qps` concurrent workers, worker `i` running `queries[i]`.
pub fn run_cell(
    store: &Store,
    model: ModelKind,
    qps: usize,
    queries: &[GeoShape],
    opts: &CellOptions,
) -> Result<BenchRecord, BenchError> {
    if qps == 0 || opts.trials == 0 {
        return Err(BenchError::InvalidSpec("qps and trials must be at least 1".into()));
    }
    if queries.len() < qps {
        return Err(BenchError::NotEnoughQueries {
            need: qps,
            have: queries.len(),
        });
    }
    let batch = &queries[..qps];
    if opts.timing {
        run_batch(store, model, batch, &opts.query)?;
    }
    let mut elapsed = 0.0;
    let mut scanned = 0u64;
    let mut issued = 0u64;
    for _ in 0..opts.trials {
        for sample in run_batch(store, model, batch, &opts.query)? {
            elapsed += sample.seconds;
            scanned += sample.scanned;
            issued += sample.issued;
        }
    }
    let n = (qps * opts.trials) as f64;
    Ok(BenchRecord {
        model,
        dss: store.len() as u64,
        qps: qps as u64,
        atd: if opts.timing { elapsed / n } else { 0.0 },
        trials: opts.trials as u64,
        scanned_mean: scanned as f64 / n,
        issued_mean: issued as f64 / n,
    })
}

struct Sample {
    seconds: f64,
    scanned: u64,
    issued: u64,
}

fn run_batch(store: &Store, model: ModelKind, batch: &[GeoShape], opts: &QueryOptions) -> Result<Vec<Sample>, BenchError> {
    let cfg = store.config();
    let gate = RwLock::new(());
    thread::scope(|scope| {
        let hold = gate.write().unwrap_or_else(|e| e.into_inner());
        let mut handles = Vec::with_capacity(batch.len());
        let mut spawn_error = None;
        for shape in batch {
            let gate = &gate;
            let spawned = thread::Builder::new().stack_size(WORKER_STACK).spawn_scoped(scope, move || {
                drop(gate.read().unwrap_or_else(|e| e.into_inner()));
                query(store, cfg, shape, model, opts)
            });
            match spawned {
                Ok(h) => handles.push(h),
                Err(e) => {
                    spawn_error = Some(e);
                    break;
                }
            }
        }
        drop(hold);
        let mut samples = Vec::with_capacity(handles.len());
        let mut failure = spawn_error.map(|e| format!("spawn: {e}"));
        for h in handles {
            match h.join() {
                Ok(Ok(r)) => samples.push(Sample {
                    seconds: r.elapsed.as_secs_f64(),
                    scanned: r.counters.entries_scanned,
                    issued: r.counters.queries_issued,
                }),
                Ok(Err(e)) => {
                    failure.get_or_insert_with(|| e.to_string());
                }
                Err(_) => {
                    failure.get_or_insert_with(|| "worker panicked".to_string());
                }
            }
        }
        match failure {
            Some(msg) => Err(BenchError::WorkerFailed(msg)),
            None => Ok(samples),
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchMatrixSpec {
    pub dss_list: Vec<u64>,
    pub qps_list: Vec<usize>,
    pub models: Vec<ModelKind>,
    pub seed: u64,
    pub cfg: GridConfig,
    pub radius_range: (f64, f64),
    pub cell: CellOptions,
}

impl BenchMatrixSpec {
    /// DSS 10..10⁶ and QPS 1..10⁴ by decades, all four models, five trials.
    /// Query radii default to 1–5 % of the shorter world side.
    pub fn with_defaults(cfg: GridConfig) -> Self {
        let side = cfg.width().min(cfg.height());
        Self {
            dss_list: decades(10, 1_000_000),
            qps_list: decades(1, 10_000).into_iter().map(|q| q as usize).collect(),
            models: ModelKind::ALL.to_vec(),
            seed: 0,
            cfg,
            radius_range: (0.01 * side, 0.05 * side),
            cell: CellOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let ascending = |v: &[u64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.dss_list.is_empty() || !ascending(&self.dss_list) {
            return Err(BenchError::InvalidSpec("dss list must be non-empty and ascending".into()));
        }
        let qps: Vec<u64> = self.qps_list.iter().map(|&q| q as u64).collect();
        if qps.is_empty() || !ascending(&qps) || qps[0] == 0 {
            return Err(BenchError::InvalidSpec("qps list must be non-empty, ascending and positive".into()));
        }
        if self.models.is_empty() {
            return Err(BenchError::InvalidSpec("no models selected".into()));
        }
        if self.cell.trials == 0 {
            return Err(BenchError::InvalidSpec("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// The shared query mix: one disc per worker of the largest QPS level.
    pub fn queries(&self) -> Result<Vec<GeoShape>, BenchError> {
        let spec = WorkloadSpec {
            dss: 0,
            seed: self.seed,
            cfg: self.cfg,
            query_count: self.qps_list.iter().copied().max().unwrap_or(1),
            radius_range: self.radius_range,
        };
        Ok(generate_queries(&spec)?)
    }

    /// Dataset spec for one DSS level, with its own derived seed.
    pub fn dataset(&self, dss: u64) -> WorkloadSpec {
        WorkloadSpec {
            dss,
            seed: derive_seed(self.seed, dss),
            cfg: self.cfg,
            query_count: 0,
            radius_range: self.radius_range,
        }
    }
}

/// `lo, 10·lo, ...` up to and including `hi`.
pub fn decades(lo: u64, hi: u64) -> Vec<u64> {
    std::iter::successors(Some(lo.max(1)), |v| v.checked_mul(10)).take_while(|v| *v <= hi).collect()
}

/// SplitMix64 finalizer over the pair.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub model: ModelKind,
    pub dss: u64,
    pub qps: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct MatrixOutcome {
    pub records: Vec<BenchRecord>,
    pub failures: Vec<CellFailure>,
}

/// Runs every (dss, model, qps) cell in that nesting order, handing each
/// finished record to `on_record` before moving on. A failing cell is logged
/// in [`MatrixOutcome::failures`] and the matrix continues.
pub fn run_matrix<F>(spec: &BenchMatrixSpec, mut on_record: F) -> Result<MatrixOutcome, BenchError>
where
    F: FnMut(&BenchRecord) -> Result<(), BenchError>,
{
    spec.validate()?;
    let queries = spec.queries()?;
    let mut outcome = MatrixOutcome::default();
    for &dss in &spec.dss_list {
        let store = Store::build(generate_entities(&spec.dataset(dss))?, spec.cfg)?;
        for &model in &spec.models {
            for &qps in &spec.qps_list {
                match run_cell(&store, model, qps, &queries, &spec.cell) {
                    Ok(rec) => {
                        on_record(&rec)?;
                        outcome.records.push(rec);
                    }
                    Err(e) => outcome.failures.push(CellFailure {
                        model,
                        dss,
                        qps: qps as u64,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    Ok(outcome)
}

/// Streams records to a results CSV, flushing after every row so an
/// interrupted run leaves a readable file.
pub struct ResultsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> ResultsWriter<W> {
    pub fn new(writer: W) -> Result<Self, BenchError> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        inner.write_record(RESULTS_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, rec: &BenchRecord) -> Result<(), BenchError> {
        self.inner.serialize(rec)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_results<R: Read>(reader: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(RESULTS_HEADER) {
        return Err(BenchError::Header(headers.iter().collect::<Vec<_>>().join(",")));
    }
    rdr.deserialize().map(|r| r.map_err(BenchError::from)).collect()
}
