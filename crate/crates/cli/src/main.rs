//! `gamestock`: synthetic market generation, model training, evaluation,
//! prediction, and graph statistics behind one config file.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 configuration problem
//! (unparseable or unknown config keys, missing files, invalid values).

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "gamestock",
    version,
    about = "Stock-return forecasting on relational market data with event-game signals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration file (structured text; unknown keys are rejected).
    #[arg(long)]
    config: PathBuf,
    /// Override one config key, e.g. --set train.seed=9 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic market with a known signal ceiling.
    Generate(RunArgs),
    /// Train a forecaster and write a checkpoint plus the epoch log.
    Train(RunArgs),
    /// Score a checkpoint on the test range and write the metrics report.
    Evaluate(RunArgs),
    /// Write per-day scores for a date range from a checkpoint.
    Predict(RunArgs),
    /// Report structure statistics of the market graph.
    GraphStats(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args): (&'static str, &RunArgs) = match &cli.command {
        Command::Generate(a) => ("generate", a),
        Command::Train(a) => ("train", a),
        Command::Evaluate(a) => ("evaluate", a),
        Command::Predict(a) => ("predict", a),
        Command::GraphStats(a) => ("graph-stats", a),
    };
    match commands::run(name, &args.config, &args.set) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
