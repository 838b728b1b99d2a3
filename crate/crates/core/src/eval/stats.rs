use std::collections::HashMap;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use super::EvalError;

/// `N × k` table of within-row ranks (1 = best, ties share the average).
///
/// Ranks are kept doubled as integers so rank sums are exact.
#[derive(Debug, Clone, PartialEq)]
pub struct RankTable {
    k: usize,
    twice_ranks: Vec<Vec<u64>>,
}

impl RankTable {
    pub fn new(ranks: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let k = ranks.first().map_or(0, Vec::len);
        let mut twice_ranks = Vec::with_capacity(ranks.len());
        for (i, row) in ranks.iter().enumerate() {
            if row.len() != k {
                return Err(EvalError::InvalidTable(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            let mut doubled = Vec::with_capacity(k);
            for &r in row {
                let d = 2.0 * r;
                if !(d.fract() == 0.0 && d >= 2.0 && d <= 2.0 * k as f64) {
                    return Err(EvalError::InvalidTable(format!("row {i}: invalid rank {r}")));
                }
                doubled.push(d as u64);
            }
            if doubled.iter().sum::<u64>() != (k * (k + 1)) as u64 {
                return Err(EvalError::InvalidTable(format!(
                    "row {i}: ranks do not sum to k(k+1)/2"
                )));
            }
            twice_ranks.push(doubled);
        }
        Ok(Self { k, twice_ranks })
    }

    /// Ranks each row of `scores` so that the highest score gets rank 1.
    pub fn from_scores(scores: &[Vec<f64>]) -> Result<Self, EvalError> {
        let k = scores.first().map_or(0, Vec::len);
        let mut twice_ranks = Vec::with_capacity(scores.len());
        for (i, row) in scores.iter().enumerate() {
            if row.len() != k {
                return Err(EvalError::InvalidTable(format!(
                    "row {i} has {} entries, expected {k}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(EvalError::InvalidTable(format!("row {i} has a non-finite score")));
            }
            let doubled = row
                .iter()
                .map(|&v| {
                    let better = row.iter().filter(|&&o| o > v).count() as u64;
                    let tied = row.iter().filter(|&&o| o == v).count() as u64;
                    // average of positions better+1 ..= better+tied, doubled
                    2 * better + tied + 1
                })
                .collect();
            twice_ranks.push(doubled);
        }
        Ok(Self { k, twice_ranks })
    }

    pub fn n(&self) -> usize {
        self.twice_ranks.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rank(&self, row: usize, col: usize) -> f64 {
        self.twice_ranks[row][col] as f64 / 2.0
    }

    pub fn ranks(&self) -> Vec<Vec<f64>> {
        self.twice_ranks
            .iter()
            .map(|r| r.iter().map(|&d| d as f64 / 2.0).collect())
            .collect()
    }

    fn twice_column_sums(&self) -> Vec<u64> {
        (0..self.k)
            .map(|j| self.twice_ranks.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn mean_ranks(&self) -> Vec<f64> {
        self.twice_column_sums()
            .iter()
            .map(|&s| s as f64 / (2 * self.n()) as f64)
            .collect()
    }

    fn require_testable(&self) -> Result<(), EvalError> {
        if self.n() < 2 || self.k < 2 {
            return Err(EvalError::InvalidTable(format!(
                "need N >= 2 and k >= 2, got N = {}, k = {}",
                self.n(),
                self.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
}

/// `12 / (N k (k+1)) · Σ R_j² − 3 N (k+1)` over column rank sums `R_j`,
/// with a chi-square(k − 1) upper-tail p-value.
pub fn friedman(table: &RankTable) -> Result<FriedmanResult, EvalError> {
    table.require_testable()?;
    let (n, k) = (table.n() as i128, table.k as i128);
    // With S_j = 2 R_j the statistic is (3 ΣS² − 3N²k(k+1)²) / (N k (k+1)).
    let sum_sq: i128 = table
        .twice_column_sums()
        .iter()
        .map(|&s| (s as i128) * (s as i128))
        .sum();
    let numerator = 3 * sum_sq - 3 * n * n * k * (k + 1) * (k + 1);
    let statistic = (numerator as f64 / (n * k * (k + 1)) as f64).max(0.0);
    let df = table.k - 1;
    let chi = ChiSquared::new(df as f64).expect("df >= 1");
    let p_value = if statistic == 0.0 { 1.0 } else { chi.sf(statistic) };
    Ok(FriedmanResult {
        statistic,
        p_value,
        degrees_of_freedom: df,
    })
}

fn next_permutation(v: &mut [u64]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Exact permutation p-value of the Friedman statistic: each row's ranks
/// are permuted independently and uniformly, and the distribution of
/// column rank sums is enumerated exactly. Meant for small tables.
pub fn friedman_exact_p_value(table: &RankTable) -> Result<f64, EvalError> {
    table.require_testable()?;
    if table.k > 6 || table.n() > 12 {
        return Err(EvalError::InvalidTable(
            "exact enumeration is limited to k <= 6 and N <= 12".into(),
        ));
    }
    let observed: u64 = table.twice_column_sums().iter().map(|s| s * s).sum();
    let mut dist: HashMap<Vec<u64>, u128> = HashMap::from([(vec![0; table.k], 1)]);
    let mut total: u128 = 1;
    for row in &table.twice_ranks {
        let mut perm = row.clone();
        perm.sort_unstable();
        let mut perms = vec![perm.clone()];
        while next_permutation(&mut perm) {
            perms.push(perm.clone());
        }
        total *= perms.len() as u128;
        let mut next: HashMap<Vec<u64>, u128> = HashMap::with_capacity(dist.len() * perms.len());
        for (sums, count) in &dist {
            for p in &perms {
                let key: Vec<u64> = sums.iter().zip(p).map(|(a, b)| a + b).collect();
                *next.entry(key).or_insert(0) += count;
            }
        }
        dist = next;
    }
    let extreme: u128 = dist
        .iter()
        .filter(|(sums, _)| sums.iter().map(|s| s * s).sum::<u64>() >= observed)
        .map(|(_, &c)| c)
        .sum();
    Ok(extreme as f64 / total as f64)
}

const Q_05: [f64; 9] = [1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164];
const Q_10: [f64; 9] = [1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920];

/// Two-tailed Nemenyi critical value (studentized range over √2) for `k`
/// models.
pub fn nemenyi_q(k: usize, alpha: f64) -> Result<f64, EvalError> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(EvalError::UnsupportedAlpha(alpha));
    };
    if !(2..=10).contains(&k) {
        return Err(EvalError::UnsupportedK(k));
    }
    Ok(table[k - 2])
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(range of k iid standard normals ≤ w)`, by Simpson quadrature of
/// `k ∫ φ(x) [Φ(x + w) − Φ(x)]^(k−1) dx`.
pub fn studentized_range_cdf(w: f64, k: usize) -> f64 {
    if w <= 0.0 || k < 2 {
        return if k < 2 { 1.0 } else { 0.0 };
    }
    let (lo, hi, steps) = (-8.5, 8.5, 2000usize);
    let h = (hi - lo) / steps as f64;
    let f = |x: f64| std_normal_pdf(x) * (std_normal_cdf(x + w) - std_normal_cdf(x)).powi(k as i32 - 1);
    let mut acc = f(lo) + f(hi);
    for i in 1..steps {
        let x = lo + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    (k as f64 * acc * h / 3.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NemenyiResult {
    pub alpha: f64,
    pub critical_difference: f64,
    pub mean_ranks: Vec<f64>,
    /// `significant[a][b]` iff `|mean_rank[a] − mean_rank[b]| ≥ CD`.
    pub significant: Vec<Vec<bool>>,
    pub p_values: Vec<Vec<f64>>,
}

pub fn nemenyi_posthoc(table: &RankTable, alpha: f64) -> Result<NemenyiResult, EvalError> {
    table.require_testable()?;
    let k = table.k;
    let q = nemenyi_q(k, alpha)?;
    let se = ((k * (k + 1)) as f64 / (6.0 * table.n() as f64)).sqrt();
    let critical_difference = q * se;
    let mean_ranks = table.mean_ranks();
    let mut significant = vec![vec![false; k]; k];
    let mut p_values = vec![vec![1.0; k]; k];
    for a in 0..k {
        for b in 0..k {
            if a == b {
                continue;
            }
            let gap = (mean_ranks[a] - mean_ranks[b]).abs();
            significant[a][b] = gap >= critical_difference;
            let w = gap / se * std::f64::consts::SQRT_2;
            p_values[a][b] = (1.0 - studentized_range_cdf(w, k)).clamp(0.0, 1.0);
        }
    }
    Ok(NemenyiResult {
        alpha,
        critical_difference,
        mean_ranks,
        significant,
        p_values,
    })
}
