//! Command-line front end: generate test problems, run the block solvers and
//! Krylov baselines with full configuration, batch benchmarks into CSV tables,
//! and run the analysis-oracle verification suites.
//!
//! Exit codes: 0 on success, 1 on numerical failure (divergence or exhausted
//! budget), 2 on usage errors (bad flags, solver/problem kind mismatch).

mod bench;
mod generate;
mod solve;
mod verify;

use clap::{Parser, Subcommand};
use std::process::ExitCode;

pub const EXIT_NUMERICAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "kaczpp", version, about = "Randomized block solvers for dense linear systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem file (low-rank least squares or kernel system).
    Generate(generate::GenerateArgs),
    /// Run one solver on a problem file and report a JSON summary.
    Solve(solve::SolveArgs),
    /// Run a benchmark manifest and write a FLOPs-to-threshold CSV table.
    Bench(bench::BenchArgs),
    /// Run an oracle verification suite and report JSON pass/fail checks.
    Verify(verify::VerifyArgs),
}

/// A command error that already knows its process exit code.
pub struct CmdError {
    pub message: String,
    pub code: u8,
}

impl CmdError {
    pub fn usage(message: impl Into<String>) -> Self {
        CmdError {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CmdError {
            message: message.into(),
            code: EXIT_NUMERICAL,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(args) => generate::run(&args),
        Command::Solve(args) => solve::run(&args),
        Command::Bench(args) => bench::run(&args),
        Command::Verify(args) => verify::run(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
