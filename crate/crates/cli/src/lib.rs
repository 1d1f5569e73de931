//! Config-driven experiment runner for the `dampwave` library.
//!
//! Exit status: 0 success, 1 audit failure, 2 usage or configuration error,
//! 3 runtime failure (divergence, solver breakdown, I/O).

mod commands;
pub mod config;
mod manifest;

use clap::{Args, CommandFactory, Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dampwave::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dampwave::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::Config(_) | E::Ellipticity { .. } | E::SizeMismatch { .. } | E::DenseCapExceeded { .. }) => 2,
            _ => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "dampwave", version, about = "Damped wave equations and their parabolic limit on finite-difference grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and export it.
    Simulate(Common),
    /// Check the energy identities along a dt ladder.
    EnergyAudit(Common),
    /// Audit the growth and dissipativity inequalities of the nonlinearity.
    GrowthAudit(Common),
    /// Cutoff tail energies and their plateau fit.
    Tails(Common),
    /// Approximate one attractor by pooled ensemble snapshots.
    Attractor(Common),
    /// Semidistance from A_eps to the lifted parabolic attractor over an eps ladder.
    Sweep(Common),
    /// Compare the integrator with the dense linear oracle.
    OracleCheck(Common),
}

#[derive(Args)]
pub struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed (overrides `output.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for ensembles and per-snapshot evaluations.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Runs the command line `argv` (without the program name) and returns the exit status.
pub fn run(argv: &[String]) -> i32 {
    if argv.is_empty() {
        eprintln!("{}", Cli::command().render_help());
        return 2;
    }
    let cli = match Cli::try_parse_from(std::iter::once("dampwave".to_string()).chain(argv.iter().cloned())) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let (name, common) = match &cli.command {
        Command::Simulate(c) => ("simulate", c),
        Command::EnergyAudit(c) => ("energy-audit", c),
        Command::GrowthAudit(c) => ("growth-audit", c),
        Command::Tails(c) => ("tails", c),
        Command::Attractor(c) => ("attractor", c),
        Command::Sweep(c) => ("sweep", c),
        Command::OracleCheck(c) => ("oracle-check", c),
    };
    match commands::execute(name, common) {
        Ok(status) => {
            match &status {
                commands::Status::Pass => {}
                commands::Status::Fail(msg) => eprintln!("audit failed: {msg}"),
                commands::Status::Error(msg) => eprintln!("error: {msg}"),
            }
            status.code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
