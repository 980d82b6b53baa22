//! `stabsel` — stability selection with overall-stability tuning.
//!
//! Subcommands: `simulate` (synthetic dataset generation), `run` (the full
//! analysis), `trace` (convergence of the stability estimate over
//! subsamples), and `pareto` (stability/accuracy trade-off). All outputs are
//! plain CSV/JSON data files; plotting is left to external tools.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 infeasible calibration,
//! 5 internal.

mod pipeline;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use stabsel::Error;

#[derive(Parser)]
#[command(
    name = "stabsel",
    version,
    about = "Stability selection with overall-stability tuning"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (AR(1)-correlated Gaussian design) as CSV
    Simulate(SimulateArgs),
    /// Run the full analysis: stability curve, regularization choices,
    /// stable sets, and error-rate calibration
    Run(RunArgs),
    /// Convergence trace of the stability estimate over successive subsamples
    Trace(TraceArgs),
    /// Stability/accuracy Pareto analysis over the regularization grid
    Pareto(ParetoArgs),
}

#[derive(Args, Clone)]
struct SyntheticArgs {
    /// Number of rows to simulate
    #[arg(long)]
    n: Option<usize>,
    /// Number of predictors to simulate
    #[arg(long)]
    p: Option<usize>,
    /// Lag-1 design correlation in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Leading coefficients, comma separated; remaining ones are zero
    #[arg(long, default_value = "1.5,1.1", value_delimiter = ',')]
    beta: Vec<f64>,
    /// Noise standard deviation
    #[arg(long = "noise-sd", default_value_t = 1.0)]
    noise_sd: f64,
}

#[derive(Args, Clone)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "n"])))]
struct InputArgs {
    /// CSV file with the response and predictor columns
    #[arg(long)]
    input: Option<PathBuf>,
    /// Response column: a header name or a zero-based index
    #[arg(long, default_value = "y")]
    response: String,
    /// Whether the CSV has a header row
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    header: bool,
    #[command(flatten)]
    synthetic: SyntheticArgs,
    /// Skip predictor standardization
    #[arg(long = "no-standardize")]
    no_standardize: bool,
    /// Master seed; every random draw derives from it
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Clone)]
struct GridArgs {
    /// Number of grid values
    #[arg(long = "grid-length", default_value_t = stabsel::lasso::DEFAULT_GRID_LENGTH)]
    grid_length: usize,
    /// Smallest grid value as a fraction of lambda_max
    /// (default: 1e-4 when n > p, else 1e-2)
    #[arg(long = "grid-ratio")]
    grid_ratio: Option<f64>,
    /// File with user-supplied grid values, one per line
    #[arg(long = "lambda-file", conflicts_with_all = ["grid_length", "grid_ratio"])]
    lambda_file: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Number of subsamples
    #[arg(long = "B", default_value_t = 500)]
    b: usize,
    /// Stability threshold for the excellent band
    #[arg(long, default_value_t = stabsel::stability::DEFAULT_STABILITY_THRESHOLD)]
    threshold: f64,
    /// Draw independent subsamples for every grid value instead of sharing
    #[arg(long = "independent-subsamples")]
    independent_subsamples: bool,
    /// Cap on worker threads (0 = one per core); results do not depend on it
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Output directory (created if absent)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Number of rows to simulate
    #[arg(long)]
    n: usize,
    /// Number of predictors to simulate
    #[arg(long)]
    p: usize,
    /// Lag-1 design correlation in [0, 1)
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    /// Leading coefficients, comma separated; remaining ones are zero
    #[arg(long, default_value = "1.5,1.1", value_delimiter = ',')]
    beta: Vec<f64>,
    /// Noise standard deviation
    #[arg(long = "noise-sd", default_value_t = 1.0)]
    noise_sd: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory (created if absent)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Decision threshold on selection frequencies
    #[arg(long = "pi-thr", default_value_t = stabsel::selection::DEFAULT_PI_THR)]
    pi_thr: f64,
    /// Per-family error-rate target; the matching threshold is solved for
    #[arg(long)]
    pfer: Option<f64>,
    /// Cross-validation folds
    #[arg(long, default_value_t = 10)]
    folds: usize,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Trace this regularization value (snapped to the nearest grid point)
    /// instead of the stability-chosen one
    #[arg(long)]
    lambda: Option<f64>,
    /// Bootstrap resamples per trace point (0 disables intervals)
    #[arg(long = "n-boot", default_value_t = 1000)]
    n_boot: usize,
    /// Confidence level of the bootstrap intervals
    #[arg(long = "ci-level", default_value_t = 0.95)]
    ci_level: f64,
    /// Window of subsequent values the cutoff rule inspects
    #[arg(long, default_value_t = 50)]
    window: usize,
    /// Maximum stability change tolerated within the window
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
}

#[derive(Args)]
struct ParetoArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Number of fresh test rows to draw (synthetic input)
    #[arg(long = "test-n", default_value_t = 25)]
    test_n: usize,
    /// Fraction of rows to hold out as a test split (CSV input)
    #[arg(long)]
    holdout: Option<f64>,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Parameter(_) | Error::Grid(_) => 2,
        Error::Io(_) | Error::Ingestion { .. } => 3,
        Error::InfeasiblePfer { .. } => 4,
        Error::ContractViolation(_) => 5,
    }
}

fn with_pool<T>(threads: usize, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    if threads == 0 {
        return f();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(f)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => pipeline::simulate_cmd(&args),
        Command::Run(args) => with_pool(args.engine.threads, || pipeline::run_cmd(&args)),
        Command::Trace(args) => with_pool(args.engine.threads, || pipeline::trace_cmd(&args)),
        Command::Pareto(args) => with_pool(args.engine.threads, || pipeline::pareto_cmd(&args)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
