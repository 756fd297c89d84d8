//! Evaluation of a latency matrix: single-query (SQE), concurrent-query
//! (CQE) and performance-uniformity (PUE) criteria, plus the comparison
//! table.
//!
//! PUE fits four families by least squares against DSS and picks one:
//!
//! * the series is *quasi-constant* when its total spread is at most
//!   [`QUASI_CONSTANT_SPREAD`] times its mean;
//! * otherwise the logarithmic, linear or exponential fit with the lowest
//!   SSE wins, unless its coefficient of determination is below
//!   [`QUASI_RANDOM_R2`], in which case the series is *quasi-random*.
//!
//! A constant fit can never have a strictly lower SSE than the linear fit
//! (the linear family contains it), hence the explicit spread rule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::{Read, Write};

use thiserror::Error;

use crate::bench::BenchRecord;
use crate::query::ModelKind;

/// Relative spread `(max - min) / mean` at or below which a series is
/// quasi-constant.
pub const QUASI_CONSTANT_SPREAD: f64 = 0.5;

/// Best-fit R² below which a series is quasi-random.
pub const QUASI_RANDOM_R2: f64 = 0.5;

/// Minimum number of points for a PUE verdict.
pub const PUE_MIN_POINTS: usize = 4;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("incomplete data for model {model}: {what}")]
    IncompleteData { model: ModelKind, what: String },
    #[error("no records to analyse")]
    Empty,
    #[error("degenerate fit input: {0}")]
    Degenerate(String),
    #[error("fit domain error: {0}")]
    Domain(String),
    #[error("need at least {need} points, have {have}")]
    InsufficientPoints { need: usize, have: usize },
    #[error("table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("table format: {0}")]
    Format(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Which record column the criteria are computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Atd,
    Scanned,
    Issued,
}

impl Metric {
    pub fn value(&self, r: &BenchRecord) -> f64 {
        match self {
            Metric::Atd => r.atd,
            Metric::Scanned => r.scanned_mean,
            Metric::Issued => r.issued_mean,
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Atd => "sec",
            Metric::Scanned => "entries",
            Metric::Issued => "calls",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "atd" => Ok(Metric::Atd),
            "scanned" => Ok(Metric::Scanned),
            "issued" => Ok(Metric::Issued),
            other => Err(format!("unknown metric `{other}` (expected atd, scanned or issued)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FitFamily {
    Constant,
    Logarithmic,
    Linear,
    Exponential,
}

/// A fitted curve.
///
/// | family      | model               |
/// |-------------|---------------------|
/// | Constant    | `y = b`             |
/// | Logarithmic | `y = a·ln(x) + b`   |
/// | Linear      | `y = a·x + b`       |
/// | Exponential | `y = a·exp(b·x)`    |
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub family: FitFamily,
    pub a: f64,
    pub b: f64,
    pub sse: f64,
    pub n: usize,
    pub r_squared: f64,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        match self.family {
            FitFamily::Constant => self.b,
            FitFamily::Logarithmic => self.a * x.ln() + self.b,
            FitFamily::Linear => self.a * x + self.b,
            FitFamily::Exponential => self.a * (self.b * x).exp(),
        }
    }

    /// For a logarithmic fit, the scale `s` in `y = a·ln(s·x)`; `None` when
    /// `a = 0` or for other families.
    pub fn log_scale(&self) -> Option<f64> {
        (self.family == FitFamily::Logarithmic && self.a != 0.0).then(|| (self.b / self.a).exp())
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.family {
            FitFamily::Constant => write!(f, "y = {:.6e}", self.b),
            FitFamily::Logarithmic => match self.log_scale() {
                Some(s) => write!(f, "y = {:.6e}·ln({:.6}·x)", self.a, s),
                None => write!(f, "y = {:.6e}", self.b),
            },
            FitFamily::Linear => write!(f, "y = {:.6e}·x + {:.6e}", self.a, self.b),
            FitFamily::Exponential => write!(f, "y = {:.6e}·exp({:.6e}·x)", self.a, self.b),
        }
    }
}

fn check_inputs(xs: &[f64], ys: &[f64]) -> Result<(), AnalysisError> {
    if xs.len() != ys.len() {
        return Err(AnalysisError::Degenerate(format!("{} xs vs {} ys", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(AnalysisError::InsufficientPoints { need: 2, have: xs.len() });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Domain("non-finite input".into()));
    }
    Ok(())
}

/// Ordinary least squares `y = slope·x + intercept`.
fn ols(xs: &[f64], ys: &[f64]) -> Result<(f64, f64), AnalysisError> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Degenerate("all x values are equal".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn finish(family: FitFamily, a: f64, b: f64, xs: &[f64], ys: &[f64]) -> FitResult {
    let mut fit = FitResult {
        family,
        a,
        b,
        sse: 0.0,
        n: xs.len(),
        r_squared: 0.0,
    };
    fit.sse = xs.iter().zip(ys).map(|(&x, &y)| (y - fit.predict(x)).powi(2)).sum();
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    fit.r_squared = if sst > 0.0 {
        1.0 - fit.sse / sst
    } else if fit.sse == 0.0 {
        1.0
    } else {
        0.0
    };
    fit
}

pub fn fit_constant(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(xs, ys)?;
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    Ok(finish(FitFamily::Constant, 0.0, mean, xs, ys))
}

pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(xs, ys)?;
    let (a, b) = ols(xs, ys)?;
    Ok(finish(FitFamily::Linear, a, b, xs, ys))
}

/// Least squares on `y = a·ln(x) + b`; requires positive xs.
pub fn fit_log(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(xs, ys)?;
    if let Some(x) = xs.iter().find(|x| **x <= 0.0) {
        return Err(AnalysisError::Domain(format!("logarithmic fit needs x > 0, got {x}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let (a, b) = ols(&lx, ys)?;
    Ok(finish(FitFamily::Logarithmic, a, b, xs, ys))
}

/// `y = a·exp(b·x)` fitted by least squares on `ln y`; requires positive ys.
/// The reported SSE is measured on the original scale.
pub fn fit_exponential(xs: &[f64], ys: &[f64]) -> Result<FitResult, AnalysisError> {
    check_inputs(xs, ys)?;
    if let Some(y) = ys.iter().find(|y| **y <= 0.0) {
        return Err(AnalysisError::Domain(format!("exponential fit needs y > 0, got {y}")));
    }
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, intercept) = ols(xs, &ly)?;
    Ok(finish(FitFamily::Exponential, intercept.exp(), slope, xs, ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PueClass {
    Constant,
    Logarithmic,
    Linear,
    Exponential,
    QuasiRandom,
}

impl PueClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            PueClass::Constant => "constant",
            PueClass::Logarithmic => "logarithmic",
            PueClass::Linear => "linear",
            PueClass::Exponential => "exponential",
            PueClass::QuasiRandom => "quasi-random",
        }
    }
}

impl fmt::Display for PueClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PueVerdict {
    pub class: PueClass,
    /// The fit backing the verdict (the constant fit for quasi-constant data).
    pub best: FitResult,
    /// Every family that could be fitted.
    pub fits: Vec<FitResult>,
}

/// Classifies a `(dss, value)` series; see the module docs for the rule.
pub fn pue_classify(points: &[(f64, f64)]) -> Result<PueVerdict, AnalysisError> {
    if points.len() < PUE_MIN_POINTS {
        return Err(AnalysisError::InsufficientPoints {
            need: PUE_MIN_POINTS,
            have: points.len(),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let constant = fit_constant(&xs, &ys)?;
    let mut fits = vec![constant];
    // a family whose domain excludes the data is skipped, not fatal
    for fit in [fit_log(&xs, &ys), fit_linear(&xs, &ys), fit_exponential(&xs, &ys)] {
        match fit {
            Ok(f) => fits.push(f),
            Err(AnalysisError::Domain(_)) => {}
            Err(e) => return Err(e),
        }
    }

    let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = constant.b;
    if max - min <= QUASI_CONSTANT_SPREAD * mean.abs() {
        return Ok(PueVerdict {
            class: PueClass::Constant,
            best: constant,
            fits,
        });
    }
    let best = fits[1..]
        .iter()
        .copied()
        .reduce(|best, f| if f.sse < best.sse { f } else { best })
        .unwrap_or(constant);
    let class = if best.r_squared < QUASI_RANDOM_R2 {
        PueClass::QuasiRandom
    } else {
        match best.family {
            FitFamily::Constant => PueClass::Constant,
            FitFamily::Logarithmic => PueClass::Logarithmic,
            FitFamily::Linear => PueClass::Linear,
            FitFamily::Exponential => PueClass::Exponential,
        }
    };
    Ok(PueVerdict { class, best, fits })
}

fn models_of(records: &[BenchRecord]) -> BTreeSet<ModelKind> {
    records.iter().map(|r| r.model).collect()
}

/// Per-model mean of the qps = 1 column.
///
/// Every DSS level a model was measured at must have a qps = 1 cell.
pub fn sqe(records: &[BenchRecord], metric: Metric) -> Result<BTreeMap<ModelKind, f64>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut out = BTreeMap::new();
    for model in models_of(records) {
        let levels: BTreeSet<u64> = records.iter().filter(|r| r.model == model).map(|r| r.dss).collect();
        let column = single_query_column(records, model, metric);
        if column.len() != levels.len() {
            let have: BTreeSet<u64> = column.iter().map(|p| p.0).collect();
            let missing: Vec<String> = levels.difference(&have).map(u64::to_string).collect();
            return Err(AnalysisError::IncompleteData {
                model,
                what: format!("no qps=1 cell for dss {}", missing.join(", ")),
            });
        }
        out.insert(model, column.iter().map(|p| p.1).sum::<f64>() / column.len() as f64);
    }
    Ok(out)
}

/// `(dss, value)` pairs of a model's qps = 1 column, ascending by DSS.
pub fn single_query_column(records: &[BenchRecord], model: ModelKind, metric: Metric) -> Vec<(u64, f64)> {
    let mut col: Vec<(u64, f64)> = records
        .iter()
        .filter(|r| r.model == model && r.qps == 1)
        .map(|r| (r.dss, metric.value(r)))
        .collect();
    col.sort_by_key(|p| p.0);
    col.dedup_by_key(|p| p.0);
    col
}

/// Diagonal cells with `dss = ratio · qps`, ascending by DSS, per model.
pub fn cqe(records: &[BenchRecord], ratio: u64, metric: Metric) -> Result<BTreeMap<ModelKind, Vec<(u64, f64)>>, AnalysisError> {
    if records.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut out = BTreeMap::new();
    for model in models_of(records) {
        let mut diag: Vec<(u64, f64)> = records
            .iter()
            .filter(|r| r.model == model && r.qps.checked_mul(ratio) == Some(r.dss))
            .map(|r| (r.dss, metric.value(r)))
            .collect();
        if diag.is_empty() {
            return Err(AnalysisError::IncompleteData {
                model,
                what: format!("no diagonal cells with dss/qps = {ratio}"),
            });
        }
        diag.sort_by_key(|p| p.0);
        out.insert(model, diag);
    }
    Ok(out)
}

/// Static descriptive rows of the comparison table.
pub fn model_traits(model: ModelKind) -> [&'static str; 3] {
    match model {
        ModelKind::Projection => ["One geometric coordinate", "One value integer (1D)", "Projection"],
        ModelKind::Raw => ["Geometric coordinates", "Two value integers (2D)", "None"],
        ModelKind::Grid => ["Cell coordinates", "Two value integers (2D)", "Scaling"],
        ModelKind::Gaia => ["Hash transformation function", "One value integer (1D)", "Scaling and projection"],
    }
}

fn table_label(model: ModelKind) -> &'static str {
    match model {
        ModelKind::Projection => "Projection",
        ModelKind::Raw => "Coordinates",
        ModelKind::Grid => "Grid",
        ModelKind::Gaia => "GAIA",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelReport {
    pub model: ModelKind,
    pub sqe: f64,
    pub cqe: Vec<(u64, f64)>,
    pub cqe_mean: f64,
    /// `None` when the qps = 1 column has fewer than [`PUE_MIN_POINTS`] levels.
    pub pue: Option<PueVerdict>,
    pub pue_points: Vec<(u64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub metric: Metric,
    pub ratio: u64,
    pub models: Vec<ModelReport>,
}

/// Column order of the comparison table.
const TABLE_ORDER: [ModelKind; 4] = [ModelKind::Projection, ModelKind::Raw, ModelKind::Grid, ModelKind::Gaia];

/// Builds the comparison for every model present in `records`.
pub fn report(records: &[BenchRecord], metric: Metric, ratio: u64) -> Result<EvaluationReport, AnalysisError> {
    let sqe_vals = sqe(records, metric)?;
    let cqe_vals = cqe(records, ratio, metric)?;
    let mut models = Vec::new();
    for model in TABLE_ORDER.into_iter().filter(|m| sqe_vals.contains_key(m)) {
        let pue_points = single_query_column(records, model, metric);
        let pue = if pue_points.len() >= PUE_MIN_POINTS {
            let pts: Vec<(f64, f64)> = pue_points.iter().map(|&(x, y)| (x as f64, y)).collect();
            Some(pue_classify(&pts)?)
        } else {
            None
        };
        let diag = cqe_vals[&model].clone();
        let cqe_mean = diag.iter().map(|p| p.1).sum::<f64>() / diag.len() as f64;
        models.push(ModelReport {
            model,
            sqe: sqe_vals[&model],
            cqe: diag,
            cqe_mean,
            pue,
            pue_points,
        });
    }
    Ok(EvaluationReport { metric, ratio, models })
}

impl EvaluationReport {
    pub fn get(&self, model: ModelKind) -> Option<&ModelReport> {
        self.models.iter().find(|m| m.model == model)
    }

    pub fn render_text(&self) -> String {
        let unit = self.metric.unit();
        let mut rows: Vec<(String, Vec<String>)> = vec![
            ("".into(), self.models.iter().map(|m| table_label(m.model).to_string()).collect()),
            ("Data labeling technique".into(), self.models.iter().map(|m| model_traits(m.model)[0].into()).collect()),
            ("Data type".into(), self.models.iter().map(|m| model_traits(m.model)[1].into()).collect()),
            ("Method used".into(), self.models.iter().map(|m| model_traits(m.model)[2].into()).collect()),
            (format!("SQE ({unit})"), self.models.iter().map(|m| format!("{:.4}", m.sqe)).collect()),
            (
                format!("CQE mean, dss/qps={} ({unit})", self.ratio),
                self.models.iter().map(|m| format!("{:.4}", m.cqe_mean)).collect(),
            ),
            (
                "PUE family".into(),
                self.models
                    .iter()
                    .map(|m| m.pue.as_ref().map_or("n/a".to_string(), |p| p.class.to_string()))
                    .collect(),
            ),
        ];
        let label_w = rows.iter().map(|r| r.0.chars().count()).max().unwrap_or(0);
        let col_w: Vec<usize> = (0..self.models.len())
            .map(|i| rows.iter().map(|r| r.1[i].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for (label, cells) in rows.drain(..) {
            let _ = write!(out, "{label:<label_w$}");
            for (cell, w) in cells.iter().zip(&col_w) {
                let _ = write!(out, "  {cell:<w$}");
            }
            out.truncate(out.trim_end().len());
            out.push('\n');
        }
        out.push('\n');
        for m in &self.models {
            let diag: Vec<String> = m.cqe.iter().map(|(d, v)| format!("({d}, {v:.4})")).collect();
            let _ = writeln!(out, "{} CQE diagonal: {}", table_label(m.model), diag.join(" "));
            if let Some(p) = &m.pue {
                let _ = writeln!(out, "{} PUE fit: {} (sse {:.3e}, r² {:.4})", table_label(m.model), p.best, p.best.sse, p.best.r_squared);
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "model",
            "sqe",
            "cqe_mean",
            "pue_family",
            "pue_a",
            "pue_b",
            "pue_sse",
            "pue_r_squared",
        ])?;
        for m in &self.models {
            let (fam, a, b, sse, r2) = match &m.pue {
                Some(p) => (
                    p.class.to_string(),
                    p.best.a.to_string(),
                    p.best.b.to_string(),
                    p.best.sse.to_string(),
                    p.best.r_squared.to_string(),
                ),
                None => ("n/a".into(), String::new(), String::new(), String::new(), String::new()),
            };
            w.write_record([m.model.to_string(), m.sqe.to_string(), m.cqe_mean.to_string(), fam, a, b, sse, r2])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `x,y,fitted_y` rows of a model's PUE series against its chosen fit.
    pub fn write_plot_data<W: Write>(&self, model: ModelKind, writer: W) -> Result<(), AnalysisError> {
        let m = self.get(model).ok_or(AnalysisError::IncompleteData {
            model,
            what: "model absent from report".into(),
        })?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y", "fitted_y"])?;
        for &(x, y) in &m.pue_points {
            let fitted = m.pue.as_ref().map(|p| p.best.predict(x as f64).to_string()).unwrap_or_default();
            w.write_record([x.to_string(), y.to_string(), fitted])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads a published-style table: a `dss` column followed by one column per
/// QPS level, one row per DSS level.
pub fn read_paper_table<R: Read>(reader: R, model: ModelKind) -> Result<Vec<BenchRecord>, AnalysisError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(str::trim) != Some("dss") || headers.len() < 2 {
        return Err(AnalysisError::Format("first column must be `dss` followed by qps columns".into()));
    }
    let qps: Vec<u64> = headers
        .iter()
        .skip(1)
        .map(|h| h.trim().parse().map_err(|_| AnalysisError::Format(format!("qps header `{h}` is not an integer"))))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let dss: u64 = row[0]
            .trim()
            .parse()
            .map_err(|_| AnalysisError::Format(format!("dss `{}` is not an integer", &row[0])))?;
        for (i, &q) in qps.iter().enumerate() {
            let cell = row.get(i + 1).unwrap_or("").trim();
            let atd: f64 = cell
                .parse()
                .map_err(|_| AnalysisError::Format(format!("cell `{cell}` (dss {dss}, qps {q}) is not a number")))?;
            out.push(BenchRecord {
                model,
                dss,
                qps: q,
                atd,
                trials: 1,
                scanned_mean: 0.0,
                issued_mean: 0.0,
            });
        }
    }
    Ok(out)
}
