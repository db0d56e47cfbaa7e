//! `cmc`: simulate data, run consensus Monte Carlo, score and diagnose.

mod commands;
mod config;
mod model;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "cmc", version, about = "Consensus Monte Carlo for clustering and feature allocation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulated dataset and its truth.
    Simulate(commands::SimulateArgs),
    /// Shard the data, run one chain per shard and merge the draws.
    Run(config::RunFlags),
    /// Compare a point estimate with a truth.
    Score(commands::ScoreArgs),
    /// Two-shard consensus against a single chain, optionally over several thresholds.
    Diagnose(commands::DiagnoseArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Run(a) => commands::run(a),
        Command::Score(a) => commands::score(a),
        Command::Diagnose(a) => commands::diagnose(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
