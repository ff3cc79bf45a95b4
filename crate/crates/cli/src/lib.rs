//! Command-line front end: CSV ingestion, fitting, Granger tests over
//! bandwidth/kernel grids, nodewise rows and coverage experiments.

pub mod args;
pub mod commands;
pub mod config;
pub mod design;
pub mod error;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult, FailureKind};

/// Validate, compute, then write every output file.
pub fn run(cli: &Cli) -> CliResult<()> {
    let outputs = match &cli.command {
        Command::Fit(a) => commands::cmd_fit(a)?,
        Command::Granger(a) => commands::cmd_granger(a)?,
        Command::Nodewise(a) => commands::cmd_nodewise(a)?,
        Command::Simulate(a) => commands::cmd_simulate(a)?,
    };
    outputs.write()
}
