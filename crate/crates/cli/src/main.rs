use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gaia_core::analysis::{self, Metric};
use gaia_core::bench::{self, BenchMatrixSpec, ResultsWriter};
use gaia_core::query::{query, ModelKind, QueryOptions};
use gaia_core::store::{load_csv, save_csv};
use gaia_core::workload::{generate_entities, WorkloadSpec};
use gaia_core::{segmenter, GeoShape, GridConfig, SpanMode, Store};

/// World used when no `--grid` file is given: [0, 1000]² with 10-unit cells.
const DEFAULT_WORLD_SIDE: f64 = 1000.0;
const DEFAULT_CELL_SIDE: f64 = 10.0;

#[derive(Parser, Debug)]
#[command(name = "gaia", version, about = "Cell-linearized geographic range queries: generate, plan, query, bench, report")]
struct Cli {
    /// Grid configuration file (`key = value` lines: min_d, max_d, min_h, max_h, cell_side).
    #[arg(long, global = true)]
    grid: Option<PathBuf>,

    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a seeded dataset CSV.
    Generate {
        #[arg(long)]
        dss: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the segment plan of a shape, one `row key_lo key_hi` line per segment.
    Plan {
        /// disc:px,py,R | rect:x1,y1,x2,y2 | poly:x1,y1;x2,y2;...
        #[arg(long, allow_hyphen_values = true)]
        shape: GeoShape,
        #[arg(long, default_value_t = SpanMode::Bounding)]
        mode: SpanMode,
    },
    /// Run one query against a dataset CSV.
    Query {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        model: ModelKind,
        #[arg(long, allow_hyphen_values = true)]
        shape: GeoShape,
        #[arg(long, default_value_t = SpanMode::Bounding)]
        mode: SpanMode,
        /// Filter candidates through the exact shape test.
        #[arg(long)]
        exact: bool,
    },
    /// Run the DSS x model x QPS matrix and stream a results CSV.
    Bench(BenchArgs),
    /// Evaluate a results CSV or published-style tables.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    dss_min: u64,
    #[arg(long)]
    dss_max: u64,
    #[arg(long, default_value_t = 1)]
    qps_min: u64,
    #[arg(long)]
    qps_max: u64,
    /// Comma-separated subset of raw,projection,grid,gaia.
    #[arg(long, value_delimiter = ',', default_values_t = ModelKind::ALL.to_vec())]
    models: Vec<ModelKind>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = SpanMode::Bounding)]
    mode: SpanMode,
    /// Skip wall-clock timing; atd_seconds is written as 0.
    #[arg(long)]
    counters_only: bool,
    /// Query radius range; defaults to 1-5 % of the shorter world side.
    #[arg(long, requires = "radius_max")]
    radius_min: Option<f64>,
    #[arg(long, requires = "radius_min")]
    radius_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["results", "paper_table"]))]
struct ReportArgs {
    /// Results CSV written by `bench`.
    #[arg(long)]
    results: Option<PathBuf>,
    /// A published-style table as `model=path`; repeatable.
    #[arg(long, value_parser = parse_table_arg)]
    paper_table: Vec<(ModelKind, PathBuf)>,
    #[arg(long, default_value = "atd")]
    metric: Metric,
    /// DSS / QPS ratio of the concurrent-query diagonal.
    #[arg(long, default_value_t = 10)]
    ratio: u64,
    /// Text report destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Machine-readable summary CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Directory for per-model `<model>_pue.csv` plot data.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

fn parse_table_arg(s: &str) -> Result<(ModelKind, PathBuf), String> {
    let (model, path) = s.split_once('=').ok_or_else(|| format!("expected model=path, got `{s}`"))?;
    Ok((model.parse()?, PathBuf::from(path)))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn grid_config(path: Option<&Path>) -> Result<GridConfig> {
    match path {
        Some(p) => GridConfig::load(p).with_context(|| format!("loading grid config {}", p.display())),
        None => Ok(GridConfig::square(DEFAULT_WORLD_SIDE, DEFAULT_CELL_SIDE)?),
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = grid_config(cli.grid.as_deref())?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Generate { dss, out: path } => {
            let spec = WorkloadSpec {
                dss,
                seed: cli.seed,
                cfg,
                query_count: 0,
                radius_range: (1.0, 1.0),
            };
            let entities = generate_entities(&spec)?;
            save_csv(&path, &entities).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {} entities to {}", entities.len(), path.display());
        }
        Command::Plan { shape, mode } => {
            let plan = segmenter::plan(&shape, &cfg, mode)?;
            write!(out, "{plan}")?;
        }
        Command::Query {
            dataset,
            model,
            shape,
            mode,
            exact,
        } => {
            let entities = load_csv(&dataset).with_context(|| format!("reading {}", dataset.display()))?;
            let store = Store::build(entities, cfg)?;
            let opts = QueryOptions {
                mode,
                exact,
                ..QueryOptions::default()
            };
            let res = query(&store, &cfg, &shape, model, &opts)?;
            let ids: Vec<String> = res.ids().iter().map(u64::to_string).collect();
            writeln!(out, "count {}", ids.len())?;
            writeln!(out, "ids {}", ids.join(" "))?;
            writeln!(out, "queries_issued {}", res.counters.queries_issued)?;
            writeln!(out, "entries_scanned {}", res.counters.entries_scanned)?;
            writeln!(out, "elapsed_seconds {}", res.elapsed.as_secs_f64())?;
        }
        Command::Bench(args) => cmd_bench(args, cfg, cli.seed)?,
        Command::Report(args) => cmd_report(args, &mut out)?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_bench(args: BenchArgs, cfg: GridConfig, seed: u64) -> Result<()> {
    let mut spec = BenchMatrixSpec::with_defaults(cfg);
    spec.dss_list = bench::decades(args.dss_min, args.dss_max);
    spec.qps_list = bench::decades(args.qps_min, args.qps_max).into_iter().map(|q| q as usize).collect();
    spec.models = args.models;
    spec.seed = seed;
    spec.cell.trials = args.trials;
    spec.cell.query = QueryOptions::exact(args.mode);
    spec.cell.timing = !args.counters_only;
    if let (Some(lo), Some(hi)) = (args.radius_min, args.radius_max) {
        spec.radius_range = (lo, hi);
    }

    let file = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut writer = ResultsWriter::new(BufWriter::new(file))?;
    let outcome = bench::run_matrix(&spec, |rec| {
        eprintln!("{} dss={} qps={} atd={:.6}", rec.model, rec.dss, rec.qps, rec.atd);
        writer.write(rec)
    })?;
    for f in &outcome.failures {
        eprintln!("cell failed: {} dss={} qps={}: {}", f.model, f.dss, f.qps, f.reason);
    }
    eprintln!("wrote {} records to {}", outcome.records.len(), args.out.display());
    if !outcome.failures.is_empty() {
        bail!("{} cell(s) failed", outcome.failures.len());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs, out: &mut impl Write) -> Result<()> {
    let mut records = Vec::new();
    if let Some(path) = &args.results {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        records.extend(bench::read_results(file).with_context(|| format!("reading {}", path.display()))?);
    }
    for (model, path) in &args.paper_table {
        let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
        records.extend(analysis::read_paper_table(file, *model).with_context(|| format!("reading {}", path.display()))?);
    }
    let report = analysis::report(&records, args.metric, args.ratio)?;

    let text = report.render_text();
    match &args.out {
        Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => out.write_all(text.as_bytes())?,
    }
    if let Some(path) = &args.csv {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(BufWriter::new(file))?;
    }
    if let Some(dir) = &args.plot_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for m in &report.models {
            let path = dir.join(format!("{}_pue.csv", m.model));
            let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
            report.write_plot_data(m.model, BufWriter::new(file))?;
        }
    }
    Ok(())
}
