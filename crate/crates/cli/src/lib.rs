//! Command-line interface over the shrinkage estimation library: the
//! `estimate`, `simulate`, and `backtest` subcommands.
//!
//! Exit codes: 0 on success, 1 on input errors (flags, files, schema
//! violations), 2 on numerical failures.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use mtse_core::backtest::{BacktestConfig, EstimatorKind, run_backtest};
use mtse_core::error::Error as CoreError;
use mtse_core::estimators::{ObservationMatrix, ShrinkageResult, mtse_with};
use mtse_core::matrix::{SymMatrix, Tolerances};
use mtse_core::simulation::{ExperimentConfig, run_experiment};
use mtse_core::targets::{TargetProvenance, TargetSet, block_identity_targets, sector_targets};

/// Default root seed, fixed for reproducibility ("MTSE" in ASCII).
pub const DEFAULT_SEED: u64 = mtse_core::simulation::DEFAULT_SEED;

/// Multi-target shrinkage covariance estimation toolkit.
#[derive(Debug, Parser)]
#[command(name = "mtse", version, about)]
pub struct Cli {
    /// Root seed for randomized runs (overrides any seed in config files).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Cap the number of worker threads (reports do not depend on this).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file overriding defaults (tolerances, seed, replications).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a shrunk covariance matrix from an observations CSV.
    Estimate(EstimateArgs),
    /// Run a Monte-Carlo experiment from a JSON specification.
    Simulate(SimulateArgs),
    /// Run the monthly minimum-variance backtest on a price panel.
    Backtest(BacktestArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Observations CSV: one row per observation, one column per variable,
    /// no header.
    #[arg(long)]
    pub data: PathBuf,
    /// Mean handling: `known` (zero mean) or `unknown` (empirical centering).
    #[arg(long, value_parser = parse_mean)]
    pub mean: MeanArg,
    /// Target specification JSON (kind: identity | blocks | sectors | file).
    #[arg(long)]
    pub targets: PathBuf,
    /// Output JSON path for the coefficients and diagnostics.
    #[arg(long)]
    pub out: PathBuf,
    /// Output CSV path for the estimated matrix (default: `<out>.matrix.csv`).
    #[arg(long)]
    pub matrix_out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanArg {
    Known,
    Unknown,
}

fn parse_mean(s: &str) -> Result<MeanArg, String> {
    match s {
        "known" => Ok(MeanArg::Known),
        "unknown" => Ok(MeanArg::Unknown),
        other => Err(format!("mean must be 'known' or 'unknown', got '{other}'")),
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    /// Output CSV path for the report rows.
    #[arg(long)]
    pub out: PathBuf,
    /// Output JSON path for the report with config echo (default:
    /// `<out>.json`).
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Close-price CSV (`date,<ticker>,...`).
    #[arg(long)]
    pub prices: PathBuf,
    /// Sector CSV (`ticker,sector`).
    #[arg(long)]
    pub sectors: PathBuf,
    /// Number of trailing months used to fit the covariance.
    #[arg(long = "K")]
    pub window_months: usize,
    /// Covariance estimator: sample | lw | mtse-sectors.
    #[arg(long, value_parser = parse_estimator)]
    pub estimator: EstimatorKind,
    /// Output CSV path for per-month variances; the summary goes to
    /// `<out stem>_summary.csv` and a JSON mirror to `<out stem>.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Use the population (1/n) monthly variance instead of the unbiased
    /// default.
    #[arg(long)]
    pub population_variance: bool,
}

fn parse_estimator(s: &str) -> Result<EstimatorKind, String> {
    match s {
        "sample" => Ok(EstimatorKind::Sample),
        "lw" => Ok(EstimatorKind::Lw),
        "mtse-sectors" => Ok(EstimatorKind::MtseSectors),
        other => Err(format!(
            "estimator must be sample, lw, or mtse-sectors, got '{other}'"
        )),
    }
}

/// Defaults overridable through `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Overrides {
    pub tolerances: Option<Tolerances>,
    pub seed: Option<u64>,
    pub replications: Option<usize>,
}

/// Target construction specification for `estimate`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TargetSpec {
    /// The single identity target (Ledoit-Wolf configuration).
    Identity,
    /// Identity plus per-block identities over the given block sizes.
    Blocks { sizes: Vec<usize> },
    /// One diagonal indicator target per sector label (one label per
    /// variable, in column order).
    Sectors { labels: Vec<String> },
    /// Dense symmetric matrices from a JSON file (array of row-major `p×p`
    /// matrices), orthonormalized on load.
    File { path: PathBuf },
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        if err.is_input_error() {
            CliError::Input(err.to_string())
        } else {
            CliError::Numerical(err.to_string())
        }
    }
}

fn input_err(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{context}: {err}"))
}

/// Parses argv and runs the selected subcommand, returning the process exit
/// code. Never panics on bad input.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version requests are successful exits.
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {}", err.message());
            err.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        // A pool may already exist (repeated invocations in one process);
        // the cap is best-effort then, and reports do not depend on it.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let overrides: Overrides = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| input_err(&format!("reading {}", path.display()), e))?;
            serde_json::from_str(&text)
                .map_err(|e| input_err(&format!("parsing {}", path.display()), e))?
        }
        None => Overrides::default(),
    };
    let tolerances = overrides.tolerances.unwrap_or_default();
    let seed = cli.seed.or(overrides.seed);

    match cli.command {
        Command::Estimate(args) => estimate(&args, &tolerances),
        Command::Simulate(args) => simulate(&args, seed, overrides.replications),
        Command::Backtest(args) => backtest(&args),
    }
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    config: EstimateEcho,
    dim: usize,
    observations: usize,
    c0: f64,
    c_targets: Vec<f64>,
    d_squared: f64,
    vhat_s: f64,
    vhat_proj: Vec<f64>,
    fallback_used: bool,
}

#[derive(Debug, Serialize)]
struct EstimateEcho {
    data: PathBuf,
    mean: String,
    targets: TargetSpec,
    tolerances: Tolerances,
}

fn estimate(args: &EstimateArgs, tolerances: &Tolerances) -> Result<(), CliError> {
    let data = read_observation_csv(&args.data)?;
    let observations = match args.mean {
        MeanArg::Known => ObservationMatrix::known_zero_mean(data),
        MeanArg::Unknown => ObservationMatrix::unknown_mean(data),
    }
    .map_err(CliError::from)?;

    let spec: TargetSpec = {
        let text = fs::read_to_string(&args.targets)
            .map_err(|e| input_err(&format!("reading {}", args.targets.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| input_err(&format!("parsing {}", args.targets.display()), e))?
    };
    let targets = build_targets(&spec, observations.p())?;

    let result: ShrinkageResult =
        mtse_with(&observations, &targets, tolerances).map_err(CliError::from)?;

    let output = EstimateOutput {
        config: EstimateEcho {
            data: args.data.clone(),
            mean: match args.mean {
                MeanArg::Known => "known".into(),
                MeanArg::Unknown => "unknown".into(),
            },
            targets: spec,
            tolerances: *tolerances,
        },
        dim: observations.p(),
        observations: observations.n(),
        c0: result.c0,
        c_targets: result.c_targets.clone(),
        d_squared: result.d_squared,
        vhat_s: result.vhat_s,
        vhat_proj: result.vhat_proj.clone(),
        fallback_used: result.fallback_used,
    };
    write_json(&args.out, &output)?;

    let matrix_out = args
        .matrix_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("matrix.csv"));
    write_matrix_csv(&matrix_out, &result.estimate)?;
    Ok(())
}

fn simulate(
    args: &SimulateArgs,
    seed: Option<u64>,
    replications: Option<usize>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| input_err(&format!("reading {}", args.config.display()), e))?;
    let mut config: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| input_err(&format!("parsing {}", args.config.display()), e))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(replications) = replications {
        config.replications = replications;
    }
    let report = run_experiment(&config).map_err(CliError::from)?;
    fs::write(&args.out, report.to_csv_string())
        .map_err(|e| input_err(&format!("writing {}", args.out.display()), e))?;
    let json_out = args
        .json_out
        .clone()
        .unwrap_or_else(|| args.out.with_extension("json"));
    fs::write(&json_out, report.to_json_string().map_err(CliError::from)?)
        .map_err(|e| input_err(&format!("writing {}", json_out.display()), e))?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct BacktestEcho {
    prices: PathBuf,
    sectors: PathBuf,
    config: BacktestConfig,
    assets_kept: usize,
    dropped_missing_sector: usize,
    dropped_gaps: usize,
}

fn backtest(args: &BacktestArgs) -> Result<(), CliError> {
    let panel = mtse_core::ingest_prices(&args.prices, &args.sectors).map_err(CliError::from)?;
    if panel.dropped_missing_sector + panel.dropped_gaps > 0 {
        eprintln!(
            "warning: dropped {} asset(s) without sector labels and {} with price gaps",
            panel.dropped_missing_sector, panel.dropped_gaps
        );
    }
    let mut config = BacktestConfig::new(args.window_months, args.estimator);
    config.population_variance = args.population_variance;
    let report = run_backtest(&panel, &config).map_err(CliError::from)?;

    fs::write(&args.out, report.to_csv_string())
        .map_err(|e| input_err(&format!("writing {}", args.out.display()), e))?;
    let summary_path = sibling_path(&args.out, "_summary.csv");
    fs::write(&summary_path, report.summary_csv_string())
        .map_err(|e| input_err(&format!("writing {}", summary_path.display()), e))?;

    let echo = BacktestEcho {
        prices: args.prices.clone(),
        sectors: args.sectors.clone(),
        config,
        assets_kept: panel.assets().len(),
        dropped_missing_sector: panel.dropped_missing_sector,
        dropped_gaps: panel.dropped_gaps,
    };
    let json_path = args.out.with_extension("json");
    let mirror = serde_json::json!({ "config": echo, "report": report });
    let text =
        serde_json::to_string_pretty(&mirror).map_err(|e| input_err("serializing report", e))?;
    fs::write(&json_path, text)
        .map_err(|e| input_err(&format!("writing {}", json_path.display()), e))?;
    Ok(())
}

fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

/// Reads a headerless numeric CSV with one observation per row into the
/// `p×n` column-per-observation layout.
fn read_observation_csv(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(&format!("reading {}", path.display()), e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|e| {
                    CliError::Input(format!(
                        "{}: row {}: bad number '{}': {e}",
                        path.display(),
                        idx + 1,
                        cell.trim()
                    ))
                })
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = rows.first()
            && row.len() != first.len()
        {
            return Err(CliError::Input(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                idx + 1,
                row.len(),
                first.len()
            )));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{}: no data rows", path.display())));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(p, n, |i, k| rows[k][i]))
}

fn build_targets(spec: &TargetSpec, dim: usize) -> Result<TargetSet, CliError> {
    match spec {
        TargetSpec::Identity => Ok(TargetSet::identity(dim)),
        TargetSpec::Blocks { sizes } => {
            if sizes.iter().sum::<usize>() != dim {
                return Err(CliError::Input(format!(
                    "targets: block sizes sum to {}, but the data has {} variables",
                    sizes.iter().sum::<usize>(),
                    dim
                )));
            }
            block_identity_targets(sizes).map_err(CliError::from)
        }
        TargetSpec::Sectors { labels } => {
            if labels.len() != dim {
                return Err(CliError::Input(format!(
                    "targets: {} sector labels for {} variables",
                    labels.len(),
                    dim
                )));
            }
            sector_targets(labels).map_err(CliError::from)
        }
        TargetSpec::File { path } => {
            let text = fs::read_to_string(path)
                .map_err(|e| input_err(&format!("reading {}", path.display()), e))?;
            let raw: Vec<Vec<Vec<f64>>> = serde_json::from_str(&text)
                .map_err(|e| input_err(&format!("parsing {}", path.display()), e))?;
            if raw.is_empty() {
                return Err(CliError::Input(format!("{}: no matrices", path.display())));
            }
            let mut mats = Vec::with_capacity(raw.len());
            for (idx, rows) in raw.iter().enumerate() {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(CliError::Input(format!(
                        "{}: matrix {} is not {dim}x{dim}",
                        path.display(),
                        idx
                    )));
                }
                let m = DMatrix::from_fn(dim, dim, |i, j| rows[i][j]);
                mats.push(SymMatrix::new(m).map_err(CliError::from)?);
            }
            TargetSet::orthonormalize(mats, TargetProvenance::Custom).map_err(CliError::from)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| input_err("serializing output", e))?;
    fs::write(path, text).map_err(|e| input_err(&format!("writing {}", path.display()), e))
}

fn write_matrix_csv(path: &Path, matrix: &SymMatrix) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..matrix.dim() {
        let row: Vec<String> = (0..matrix.dim())
            .map(|j| matrix.get(i, j).to_string())
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| input_err(&format!("writing {}", path.display()), e))
}
