//! Command-line front end for the giver-scheme steady-state pipelines:
//! solve the Laplace-domain functional equation, invert to the wealth
//! density, run agent-based simulations, and emit plot-ready CSV data.
//! Every run writes a manifest with config, seed, and output checksums.

// Validation deliberately uses `!(x > 0.0)` so NaN fails closed.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;

use commands::*;

#[derive(Parser)]
#[command(
    name = "giver",
    version,
    about = "Steady-state wealth distribution of the giver-scheme asset-transfer model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the functional equation along a ray and export the transform.
    Solve(SolveArgs),
    /// Invert the transform to the steady-state wealth density.
    Invert(InvertArgs),
    /// Run the agent-based exchange simulation.
    Simulate(SimulateArgs),
    /// Produce the CSV data behind a named figure (fig1..fig7).
    Figures(FiguresArgs),
    /// Re-run a command recorded in a manifest.json.
    Replay(ReplayArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Invert(args) => cmd_invert(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Figures(args) => cmd_figures(args),
        Command::Replay(args) => cmd_replay(args),
    };
    match result {
        Ok(dir) => {
            println!("outputs written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            if usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
