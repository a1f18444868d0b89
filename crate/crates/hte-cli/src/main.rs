//! Batch front-end: generate data, run the cohort pipeline, fit estimator
//! grids with evaluation metrics, and compute feature importance.
//!
//! Exit codes: 0 on success (benchmark: at least one estimator succeeded),
//! 1 when every estimator failed or a runtime step broke, 2 on invalid
//! configuration or violated preconditions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "hte",
    version,
    about = "Treatment-effect estimation benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file for the subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Master seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the estimator grid (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset (synthetic generator or cohort pipeline) to CSV
    /// plus a provenance sidecar.
    Generate(CommonArgs),
    /// Run the claim-style cohort pipeline: timelines, matrix, funnel tally.
    Cohort(CommonArgs),
    /// Fit an estimator grid and write the evaluation report.
    Benchmark(CommonArgs),
    /// Feature attribution for one fitted estimator.
    Importance(CommonArgs),
}

/// Errors carrying their process exit code: 2 for configuration problems,
/// 1 for runtime failures.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => commands::generate::run(&args),
        Command::Cohort(args) => commands::cohort::run(&args),
        Command::Benchmark(args) => commands::benchmark::run(&args),
        Command::Importance(args) => commands::importance::run(&args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
