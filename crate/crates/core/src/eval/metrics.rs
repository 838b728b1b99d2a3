use std::cmp::Ordering;

use super::EvalError;

/// Scores with binary labels (`true` = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, EvalError> {
        if scores.len() != labels.len() {
            return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(EvalError::NonFiniteScore(i));
        }
        Ok(Self { scores, labels })
    }

    /// Positives scored `pos`, negatives scored `neg`.
    pub fn from_groups(pos: &[f64], neg: &[f64]) -> Result<Self, EvalError> {
        let scores = pos.iter().chain(neg).copied().collect();
        let labels = std::iter::repeat(true)
            .take(pos.len())
            .chain(std::iter::repeat(false).take(neg.len()))
            .collect();
        Self::new(scores, labels)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn num_negatives(&self) -> usize {
        self.len() - self.num_positives()
    }

    fn degenerate(&self) -> EvalError {
        EvalError::DegenerateLabels {
            positives: self.num_positives(),
            negatives: self.num_negatives(),
        }
    }
}

fn cmp_scores(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).expect("scores are finite")
}

/// Mann–Whitney ROC-AUC with ties counted as one half.
///
/// The statistic is accumulated as the integer `2U` so the result is exact
/// up to the final division.
pub fn roc_auc(set: &ScoredSet) -> Result<f64, EvalError> {
    let (p, n) = (set.num_positives(), set.num_negatives());
    if p == 0 || n == 0 {
        return Err(set.degenerate());
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| cmp_scores(set.scores[a], set.scores[b]));
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos_tied, mut neg_tied) = (0u128, 0u128);
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            if set.labels[order[j]] {
                pos_tied += 1;
            } else {
                neg_tied += 1;
            }
            j += 1;
        }
        twice_u += pos_tied * (2 * negatives_below + neg_tied);
        negatives_below += neg_tied;
        i = j;
    }
    Ok(twice_u as f64 / (2 * p as u128 * n as u128) as f64)
}

/// Mean precision at the rank of each positive. Items are ranked by
/// descending score; equal scores keep their input order.
pub fn average_precision(set: &ScoredSet) -> Result<f64, EvalError> {
    let p = set.num_positives();
    if p == 0 {
        return Err(set.degenerate());
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| cmp_scores(set.scores[b], set.scores[a]));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if set.labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / p as f64)
}
