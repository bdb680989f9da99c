//! `magdisc`: simulate suites, train and apply skeleton-posterior models,
//! learn MAGs and benchmark learners.

mod bench;
mod config;
mod error;
mod learn;
mod posterior;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Environment variable naming the default model directory.
pub const MODEL_DIR_ENV: &str = "MAGDISC_MODEL_DIR";

#[derive(Parser, Debug)]
#[command(name = "magdisc", version, about = "Learn maximal ancestral graphs from observational data")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Log more detail (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a suite of random ADMGs, their parameters and datasets.
    Simulate(simulate::SimulateArgs),
    /// Train a skeleton-posterior cascade on a simulated corpus.
    TrainPosterior(posterior::TrainArgs),
    /// Infer a skeleton posterior for one dataset.
    Posterior(posterior::PosteriorArgs),
    /// Learn a MAG with ABIC, SPOT or FCI.
    Learn(learn::LearnCmd),
    /// Score predictions against ground truth.
    Eval(bench::EvalArgs),
    /// Run learners over a suite and aggregate metrics.
    Bench(bench::BenchArgs),
}

/// Model path used when none is given: `$MAGDISC_MODEL_DIR/cascade.json`,
/// else `models/cascade.json`.
pub fn default_model_path() -> PathBuf {
    let dir = std::env::var_os(MODEL_DIR_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("models"));
    dir.join("cascade.json")
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::TrainPosterior(a) => posterior::run_train(a),
        Command::Posterior(a) => posterior::run_posterior(a),
        Command::Learn(a) => learn::run(a),
        Command::Eval(a) => bench::run_eval(a),
        Command::Bench(a) => bench::run_bench(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
