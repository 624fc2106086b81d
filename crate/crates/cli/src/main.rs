//! `adjcif`: marginal cumulative incidence curves adjusted for confounding.

mod estimate;
mod input;
mod simulate;
mod svg;

use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_ESTIMATION: u8 = 3;
pub const EXIT_SIMULATION: u8 = 4;

/// An error paired with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub trait CodeExt<T> {
    fn code(self, code: u8) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> CodeExt<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code,
            error: e.into(),
        })
    }
}

pub fn write_output(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .code(EXIT_INPUT)
}

#[derive(Debug, Parser)]
#[command(name = "adjcif", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate adjusted cumulative incidence curves from a CSV file.
    Estimate(estimate::EstimateArgs),
    /// Run a simulation scenario and report bias and RMSE against the true curves.
    Simulate(simulate::SimulateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(a) => estimate::run(a),
        Command::Simulate(a) => simulate::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
