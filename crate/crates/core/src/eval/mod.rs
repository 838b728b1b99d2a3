//! Threshold-free link metrics, multi-run aggregation and rank-based
//! significance tests.

mod evaluate;
mod metrics;
mod report;
mod stats;

use thiserror::Error;

pub use evaluate::{evaluate_split, LinkScorer, RelationMetrics};
pub use metrics::{average_precision, roc_auc, ScoredSet};
pub use report::{
    aggregate_runs, Aggregate, ExperimentReport, Metric, RelationSignificance, RunRecord,
    StatsRows,
};
pub use stats::{
    friedman, friedman_exact_p_value, nemenyi_posthoc, nemenyi_q, studentized_range_cdf,
    FriedmanResult, NemenyiResult, RankTable,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("need at least one positive and one negative label (got {positives} positives, {negatives} negatives)")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("length mismatch: {0} scores vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("invalid rank table: {0}")]
    InvalidTable(String),
    #[error("no critical values tabulated for k = {0} (supported: 2..=10)")]
    UnsupportedK(usize),
    #[error("no critical values tabulated for alpha = {0} (supported: 0.05, 0.10)")]
    UnsupportedAlpha(f64),
    #[error("no runs to aggregate")]
    NoRuns,
}
