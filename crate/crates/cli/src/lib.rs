//! Command-line front end for joint compositional covariance estimation.

pub mod args;
pub mod commands;
pub mod experiment;
pub mod ingest;
pub mod matrix_io;
pub mod network;

use args::{Cli, Command};
use commands::Outcome;

/// Process exit status for a failed command.
pub const EXIT_ERROR: i32 = 1;
/// Outputs were written but a fit did not converge.
pub const EXIT_NONCONVERGED: i32 = 3;

pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    match &cli.command {
        Command::Estimate(a) => commands::cmd_estimate(a),
        Command::Cv(a) => commands::cmd_cv(a),
        Command::Simulate(a) => commands::cmd_simulate(a),
        Command::Stability(a) => commands::cmd_stability(a),
        Command::ExportNetwork(a) => commands::cmd_export_network(a),
    }
}

pub fn exit_code(outcome: &Outcome) -> i32 {
    if outcome.converged || outcome.allow_nonconverged {
        0
    } else {
        EXIT_NONCONVERGED
    }
}
