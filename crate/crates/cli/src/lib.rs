//! Library side of the `mfrn` binary: argument types, the `run` and `compare`
//! commands, and the artifacts they write.

mod compare;
mod manifest;
mod run;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use compare::compare;
pub use manifest::{config_hash, RunManifest};
pub use run::run;

#[derive(Debug, Parser)]
#[command(name = "mfrn", version, about = "Train and compare mean-field residual network controls")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// First seed of the seed list (stochastic scenarios only).
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's activation.
        #[arg(long)]
        activation: Option<String>,
    },
    /// Align the histories and final controls of two runs.
    Compare {
        dir_a: PathBuf,
        dir_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub enum CliError {
    /// Exit status 2.
    InvalidConfig(String),
    /// Exit status 3.
    Divergence(String),
    /// Exit status 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InvalidConfig(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::InvalidConfig(m) => write!(f, "invalid config: {m}"),
            CliError::Divergence(m) => write!(f, "solver diverged: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<mfrn_core::Error> for CliError {
    fn from(e: mfrn_core::Error) -> Self {
        use mfrn_core::Error as E;
        match e {
            E::InvalidConfig { .. } => CliError::InvalidConfig(e.to_string()),
            E::Divergence { .. } | E::NonFinite(_) | E::Cfl { .. } => CliError::Divergence(e.to_string()),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

/// Worker threads from `MFRN_THREADS`, default 1.
pub fn thread_count() -> Result<usize, CliError> {
    match std::env::var("MFRN_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n >= 1)
            .ok_or_else(|| CliError::InvalidConfig(format!("MFRN_THREADS must be a positive integer, got {v:?}"))),
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count()?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            activation,
        } => run(&config, &out, seed, activation.as_deref()),
        Command::Compare { dir_a, dir_b, out } => compare(&dir_a, &dir_b, &out),
    }
}
