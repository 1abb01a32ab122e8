//! Command-line front end: timing reports, design pipelines, closed-loop
//! simulation, Monte-Carlo frequency sweeps, certificate verification, and
//! bundled-demo reproduction.
//!
//! Exit codes: 0 success, 1 infeasibility/violations/runtime failure,
//! 2 malformed configuration or invalid input.

// `!(x > 0.0)` guards reject NaN along with nonpositive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifact;
mod commands;
mod config;
mod logging;
mod svg;

#[derive(Debug)]
pub enum CliError {
    /// Invalid input or malformed configuration (exit 2).
    Usage(String),
    /// Infeasibility, violations, or runtime failure (exit 1).
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failed(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "petc",
    about = "Design and verification toolkit for periodic event-triggered control",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Report the admissible sampling window and triggering coefficient for
    /// given clock rates.
    Timing(commands::timing::TimingArgs),
    /// Solve the state-feedback certificate (synthesizing gains first when
    /// absent) and emit a design artifact.
    DesignState(commands::design_state::DesignStateArgs),
    /// Solve the output-feedback certificate and its coupling condition and
    /// emit a design artifact.
    DesignOutput(commands::design_output::DesignOutputArgs),
    /// Simulate one closed-loop run and emit trace/event/monitor artifacts.
    Simulate(commands::simulate::SimulateArgs),
    /// Sweep sampling periods with seeded Monte-Carlo batches and emit
    /// triggering-frequency statistics.
    Montecarlo(commands::montecarlo::MontecarloArgs),
    /// Re-verify a design artifact (or a bundled certificate) independently.
    VerifyLmi(commands::verify_lmi::VerifyLmiArgs),
    /// Reproduce a bundled demo end to end.
    Example(commands::example::ExampleArgs),
}

/// Options shared by artifact-emitting commands.
#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Timing(args) => commands::timing::run(args),
        Command::DesignState(args) => commands::design_state::run(args),
        Command::DesignOutput(args) => commands::design_output::run(args),
        Command::Simulate(args) => commands::simulate::run(args),
        Command::Montecarlo(args) => commands::montecarlo::run(args),
        Command::VerifyLmi(args) => commands::verify_lmi::run(args),
        Command::Example(args) => commands::example::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            logging::error(err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
