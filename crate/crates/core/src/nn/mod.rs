//! Small dense numerics for the link-prediction model.

mod adam;
mod checkpoint;
mod gradcheck;
mod head;
mod matrix;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, NamedTensor};
pub use gradcheck::{finite_diff_check, relative_error};
pub use head::{Activation, DenseLayer, HeadGrads, HeadModule, HeadTrace};
pub use matrix::Matrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input")]
    EmptyInput,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub(crate) fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<(), NnError> {
    if expected == got {
        Ok(())
    } else {
        Err(NnError::DimensionMismatch {
            context,
            expected,
            got,
        })
    }
}

pub const PROB_CLAMP: f64 = 1e-12;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy; probabilities are clamped to
/// `[1e-12, 1 - 1e-12]` before the logarithm.
pub fn bce_loss(predictions: &[f64], labels: &[f64]) -> Result<f64, NnError> {
    if predictions.len() != labels.len() {
        return Err(NnError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(NnError::EmptyInput);
    }
    let total: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / predictions.len() as f64)
}
