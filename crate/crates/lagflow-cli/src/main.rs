//! `lagflow` command-line front end.
//!
//! Exit codes are a stable contract:
//! `0` success, `1` internal/configuration error, `2` a trajectory outcome
//! differed from the configured expectation, `3` an assumption violation was
//! detected during estimation.

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod config;
mod constants_cmd;
mod reproduce;
mod run_cmd;

#[derive(Parser)]
#[command(
    name = "lagflow",
    about = "Continuous-time flows for equality-constrained optimization: run dynamics, estimate constants, reproduce the benchmark sweep",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one flow from a set of initial points and write trajectory
    /// CSVs plus a summary JSON.
    Run(run_cmd::RunArgs),
    /// Estimate every regularity constant, compute the explicit gain
    /// threshold, and run the pointwise matrix certificates.
    Constants(constants_cmd::ConstantsArgs),
    /// Re-run a committed benchmark configuration end to end.
    Reproduce(reproduce::ReproduceArgs),
}

pub(crate) enum CmdOutcome {
    Success,
    UnexpectedOutcome(String),
    AssumptionViolation(String),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::Run(args) => run_cmd::run(args),
        Command::Constants(args) => constants_cmd::run(args),
        Command::Reproduce(args) => reproduce::run(args),
    };

    match result {
        Ok(CmdOutcome::Success) => ExitCode::SUCCESS,
        Ok(CmdOutcome::UnexpectedOutcome(msg)) => {
            eprintln!("unexpected outcome: {msg}");
            ExitCode::from(2)
        }
        Ok(CmdOutcome::AssumptionViolation(msg)) => {
            eprintln!("assumption violation: {msg}");
            ExitCode::from(3)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
