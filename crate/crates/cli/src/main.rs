use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybridfpca::Error;

mod commands;
mod config;

/// Hybrid principal components, pooling and function-on-function regression
/// for region-referenced longitudinal functional data.
#[derive(Debug, Parser)]
#[command(name = "hybridfpca", version, about)]
struct Cli {
    /// Worker threads for replicates and per-q fits (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a simulation scenario and write its report tables.
    Simulate(SimulateArgs),
    /// Fit the hybrid decomposition of a tensor CSV.
    Decompose(DecomposeArgs),
    /// Collapse a tensor, or a stored decomposition truncated at q, to curves.
    Pool(PoolArgs),
    /// Fit a function-on-function regression.
    Fit(FitArgs),
    /// Choose the number of hybrid components by test MSPE.
    Select(SelectArgs),
    /// Print a simulation report as a metric-by-cell table.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    scenario: u8,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    /// Long-form `subject,region,omega,s,value` CSV.
    #[arg(long)]
    tensor: PathBuf,
    /// Per-dimension fraction of variance explained.
    #[arg(long)]
    fve: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct PoolArgs {
    /// Tensor CSV to pool directly.
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    tensor: Option<PathBuf>,
    /// Decomposition directory written by `decompose`.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of ranked components to keep (default: all).
    #[arg(long, requires = "model")]
    q: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Response curves, `subject,s,value`.
    #[arg(long)]
    response: PathBuf,
    /// Predictor curves, `subject,g,value`; repeat once per predictor.
    #[arg(long = "predictor", required = true)]
    predictors: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[arg(long)]
    tensor: PathBuf,
    #[arg(long = "predictor", required = true)]
    predictors: Vec<PathBuf>,
    #[arg(long)]
    fve: Option<f64>,
    /// Number of seeded train/test splits.
    #[arg(long, default_value_t = 1)]
    resplits: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by `simulate`.
    #[arg(long)]
    input: PathBuf,
    /// Also write the table as `table.csv` here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn exit_code(err: &Error) -> u8 {
    if err.is_input_error() {
        2
    } else {
        3
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYBRIDFPCA_LOG", "warn")).init();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return ExitCode::from(3);
        }
    };
    let threads = pool.current_num_threads();
    let result = pool.install(|| match cli.command {
        Command::Simulate(a) => commands::simulate(a.scenario, &a.common, threads),
        Command::Decompose(a) => commands::decompose(&a.tensor, a.fve, &a.common),
        Command::Pool(a) => commands::pool(a.tensor.as_deref(), a.model.as_deref(), a.q, &a.out),
        Command::Fit(a) => commands::fit(&a.response, &a.predictors, &a.common),
        Command::Select(a) => commands::select(&a.tensor, &a.predictors, a.fve, a.resplits, &a.common),
        Command::Report(a) => commands::report(&a.input, a.out.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
