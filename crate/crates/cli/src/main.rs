//! `wishart`: exact eigenvalue densities of Wishart correlation matrices,
//! Monte Carlo histograms and comparisons between the two.
//!
//! Exit codes: 0 success, 1 a numerical result missed its acceptance
//! threshold, 2 usage or configuration error.

mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;
use wishart_core::Error;

use crate::args::{apply_config, Cli, Command};
use crate::commands::NUMERICAL_FAILURE;

const USAGE_ERROR: u8 = 2;

/// Numerical failures exit 1; everything else the user can fix by changing
/// the input exits 2.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::NoConvergence(_)
                | Error::ExtrapolationUnstable { .. }
                | Error::BackendDisagreement { .. }
                | Error::NegativeDensity { .. }
                | Error::InsufficientCoverage(_) => NUMERICAL_FAILURE,
                _ => USAGE_ERROR,
            };
        }
    }
    USAGE_ERROR
}

fn run(mut command: Command) -> anyhow::Result<ExitCode> {
    apply_config(&mut command)?;
    match &command {
        Command::Density(a) => commands::density(a),
        Command::Mc(a) => commands::mc(a),
        Command::Compare(a) => commands::compare_cmd(a),
        Command::Ingest(a) => commands::ingest(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
