use std::collections::BTreeMap;

use serde::Serialize;

use super::{average_precision, roc_auc, EvalError, ScoredSet};
use crate::kg::{EdgeSplit, RelationType, SplitPart, Triple};

/// Anything that assigns a link score to candidate triples.
pub trait LinkScorer {
    fn score_triples(&self, triples: &[Triple]) -> Vec<f64>;
}

impl<F> LinkScorer for F
where
    F: Fn(&Triple) -> f64,
{
    fn score_triples(&self, triples: &[Triple]) -> Vec<f64> {
        triples.iter().map(self).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelationMetrics {
    pub roc_auc: f64,
    pub average_precision: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// Scores the positives and stored negatives of `part` relation by
/// relation.
pub fn evaluate_split(
    scorer: &impl LinkScorer,
    split: &EdgeSplit,
    part: SplitPart,
) -> Result<BTreeMap<RelationType, RelationMetrics>, EvalError> {
    let mut out = BTreeMap::new();
    for relation in split.relations() {
        let pos = split.positives(part, relation);
        let neg = split.negatives(part, relation);
        let set = ScoredSet::from_groups(&scorer.score_triples(pos), &scorer.score_triples(neg))?;
        out.insert(
            relation,
            RelationMetrics {
                roc_auc: roc_auc(&set)?,
                average_precision: average_precision(&set)?,
                positives: pos.len(),
                negatives: neg.len(),
            },
        );
    }
    Ok(out)
}
