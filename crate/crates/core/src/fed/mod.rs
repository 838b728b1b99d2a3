//! Simulated clients and server for head-only federated training.
//!
//! Clients own their graph, split, encoder and optimizer. The server in
//! [`server`] sees only head snapshots and scalar validation scores.

mod client;
pub mod server;

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

pub use client::{ClientState, ModelConfig};
pub use server::{
    average_heads, cross_evaluate, form_groups, run_federation, FederationOutcome, GroupingResult,
};

use crate::eval::EvalError;
use crate::kg::{KgError, RelationType};
use crate::nn::NnError;
use crate::sage::SageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FedError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no clients or heads given")]
    EmptyInput,
    #[error("client {0} has no training edges")]
    EmptyTrainingSet(String),
    #[error("invalid federation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Sage(#[from] SageError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The five training regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    LocalM,
    FLavg,
    FLavgFT,
    AdapFLavg,
    AdapFLavgFT,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::LocalM,
        Variant::FLavg,
        Variant::FLavgFT,
        Variant::AdapFLavg,
        Variant::AdapFLavgFT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::LocalM => "LocalM",
            Variant::FLavg => "FLavg",
            Variant::FLavgFT => "FLavgFT",
            Variant::AdapFLavg => "AdapFLavg",
            Variant::AdapFLavgFT => "AdapFLavgFT",
        }
    }

    pub fn federated(self) -> bool {
        self != Variant::LocalM
    }

    pub fn adaptive(self) -> bool {
        matches!(self, Variant::AdapFLavg | Variant::AdapFLavgFT)
    }

    pub fn fine_tuned(self) -> bool {
        matches!(self, Variant::FLavgFT | Variant::AdapFLavgFT)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("local") && *v == Variant::LocalM))
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub variant: Variant,
    pub delta: f64,
    pub finetune_epochs: usize,
    /// Train the clients of a round on the rayon pool.
    pub parallel: bool,
}

impl FederationConfig {
    /// Defaults: 10 rounds of 20 epochs, delta 0.02, fine-tuning for one
    /// round's worth of epochs.
    pub fn new(variant: Variant) -> Self {
        Self {
            rounds: 10,
            local_epochs: 20,
            variant,
            delta: 0.02,
            finetune_epochs: 20,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<(), FedError> {
        if self.rounds == 0 {
            return Err(FedError::InvalidConfig("rounds must be at least 1".into()));
        }
        if !(self.delta >= 0.0) {
            return Err(FedError::InvalidConfig("delta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stage {
    #[serde(rename = "pretrain")]
    Pretrain,
    #[serde(rename = "round")]
    Round,
    #[serde(rename = "finetune")]
    FineTune,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Pretrain => "pretrain",
            Stage::Round => "round",
            Stage::FineTune => "finetune",
        }
    }
}

/// One client's state at the end of a round (after the exchange).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub stage: Stage,
    pub client: String,
    pub variant: Variant,
    /// Loss of the last local epoch of the round; NaN if none ran.
    pub train_loss: f64,
    pub val_auc: Vec<(RelationType, f64)>,
}
