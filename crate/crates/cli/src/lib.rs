//! Command-line front end for the `geomeasure` solvers: reads state files,
//! runs the pure and mixed solvers and α-sweeps, and checks optimality
//! certificates. The binary is a thin wrapper over [`run`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod format;

use clap::{Parser, Subcommand};

use commands::{KktArgs, MixedArgs, PureArgs, Report, SweepArgs};
pub use error::{exit, CliError};

#[derive(Debug, Parser)]
#[command(
    name = "geomeasure",
    version,
    about = "Geometric measure of entanglement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entanglement eigenvalue of a pure state.
    Pure(PureArgs),
    /// Nearest disentangled state of a density matrix.
    Mixed(MixedArgs),
    /// Solve a two-qubit example family over a grid of α.
    Sweep(SweepArgs),
    /// Check the optimality conditions of an ensemble.
    #[command(name = "kkt-check")]
    KktCheck(KktArgs),
}

impl Command {
    fn out(&self) -> Option<&std::path::Path> {
        match self {
            Command::Pure(a) => a.output.out.as_deref(),
            Command::Mixed(a) => a.output.out.as_deref(),
            Command::Sweep(a) => a.output.out.as_deref(),
            Command::KktCheck(a) => a.output.out.as_deref(),
        }
    }
}

/// Runs the subcommand and returns its report without writing anything.
pub fn execute(cli: &Cli) -> Result<Report, CliError> {
    match &cli.command {
        Command::Pure(a) => commands::pure(a),
        Command::Mixed(a) => commands::mixed(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::KktCheck(a) => commands::kkt_check(a),
    }
}

/// Runs the subcommand, writes its output to `--out` or stdout and its notes
/// to stderr, and returns the exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    let report = execute(cli)?;
    match cli.command.out() {
        Some(path) => std::fs::write(path, &report.body).map_err(|e| CliError::io(path, e))?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(report.body.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io("<stdout>", e))?;
        }
    }
    for note in &report.notes {
        eprintln!("geomeasure: {note}");
    }
    Ok(report.code)
}
