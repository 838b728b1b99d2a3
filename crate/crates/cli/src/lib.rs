//! Config-driven runner for federated link-prediction experiments.
//!
//! Commands: `generate` writes synthetic client graphs, `train` and
//! `evaluate` run a single regime through checkpoints, `compare` sweeps all
//! requested regimes over repeated runs and writes the report files, and
//! `stats` tabulates structural metrics of graph files.

pub mod commands;
pub mod config;
pub mod experiment;

use thiserror::Error;

pub use commands::{cmd_compare, cmd_evaluate, cmd_generate, cmd_stats, cmd_train};
pub use config::{ClientSource, ClientSpec, RunConfig};
pub use experiment::{ClientData, Experiment, RunOutput, Sweep};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("interrupted")]
    Interrupted,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Interrupted => 130,
        }
    }
}

/// Worker cap from `FGS_THREADS`; `None` when unset.
pub fn thread_limit(value: Option<&str>) -> Result<Option<usize>, CliError> {
    match value {
        None => Ok(None),
        Some(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Config(format!("FGS_THREADS: expected a positive integer, got {v:?}"))),
        },
    }
}
