use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::{friedman, nemenyi_posthoc, EvalError, FriedmanResult, NemenyiResult, RankTable};
use crate::kg::RelationType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Metric {
    #[serde(rename = "roc_auc")]
    RocAuc,
    #[serde(rename = "ap")]
    AveragePrecision,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::RocAuc, Metric::AveragePrecision];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::RocAuc => "roc_auc",
            Metric::AveragePrecision => "ap",
        }
    }
}

/// Test metrics of one (country, relation, model, run) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub country: String,
    pub relation: RelationType,
    pub model: String,
    pub run: usize,
    pub roc_auc: f64,
    pub average_precision: f64,
}

impl RunRecord {
    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::RocAuc => self.roc_auc,
            Metric::AveragePrecision => self.average_precision,
        }
    }

    fn key(&self) -> (&str, RelationType, &str, usize) {
        (&self.country, self.relation, &self.model, self.run)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub country: String,
    pub relation: RelationType,
    pub model: String,
    pub metric: Metric,
    pub mean: f64,
    /// Sample standard deviation, 0 for a single run.
    pub std: f64,
    pub n_runs: usize,
}

/// What a row of the Friedman rank table stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StatsRows {
    /// One test per relation with one row per country.
    #[default]
    CountryPerRelation,
    /// A single test whose rows are all (country, relation) cells.
    CountryRelation,
}

impl std::str::FromStr for StatsRows {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "country" | "country_per_relation" => Ok(StatsRows::CountryPerRelation),
            "country_relation" | "pooled" => Ok(StatsRows::CountryRelation),
            other => Err(format!("unknown stats row grouping {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationSignificance {
    pub models: Vec<String>,
    pub rows: Vec<String>,
    pub friedman: Option<FriedmanResult>,
    pub friedman_rejected: bool,
    pub nemenyi: Option<NemenyiResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<Aggregate>,
    /// Keyed by relation name (or `all` for pooled rows), then metric.
    pub significance: BTreeMap<String, BTreeMap<String, RelationSignificance>>,
}

fn mean_std(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (mean, (dev.iter().sum::<f64>() / (n - 1.0)).sqrt())
}

fn significance(
    labels: Vec<String>,
    models: &[String],
    cells: &[Vec<Option<f64>>],
    alpha: f64,
) -> RelationSignificance {
    let mut rows = Vec::new();
    let mut scores = Vec::new();
    let mut skipped = Vec::new();
    for (label, row) in labels.into_iter().zip(cells) {
        if row.iter().all(Option::is_some) {
            scores.push(row.iter().map(|v| v.unwrap()).collect::<Vec<f64>>());
            rows.push(label);
        } else {
            skipped.push(label);
        }
    }
    let mut out = RelationSignificance {
        models: models.to_vec(),
        rows,
        friedman: None,
        friedman_rejected: false,
        nemenyi: None,
        note: (!skipped.is_empty()).then(|| format!("rows missing a model: {}", skipped.join(","))),
    };
    let tested = RankTable::from_scores(&scores).and_then(|table| {
        let f = friedman(&table)?;
        let n = nemenyi_posthoc(&table, alpha)?;
        Ok((f, n))
    });
    match tested {
        Ok((f, n)) => {
            out.friedman_rejected = f.p_value < alpha;
            out.friedman = Some(f);
            out.nemenyi = Some(n);
        }
        Err(e) => {
            let note = match out.note.take() {
                Some(prev) => format!("{prev}; {e}"),
                None => e.to_string(),
            };
            out.note = Some(note);
        }
    }
    out
}

/// Means and sample standard deviations per (country, relation, model,
/// metric), plus Friedman and Nemenyi tests on the per-cell means.
///
/// The result does not depend on the order of `records`.
pub fn aggregate_runs(
    records: &[RunRecord],
    rows: StatsRows,
    alpha: f64,
) -> Result<ExperimentReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let mut records = records.to_vec();
    records.sort_by(|a, b| a.key().cmp(&b.key()));

    type CellKey = (String, RelationType, String);
    let mut cells: BTreeMap<CellKey, Vec<&RunRecord>> = BTreeMap::new();
    for r in &records {
        cells
            .entry((r.country.clone(), r.relation, r.model.clone()))
            .or_default()
            .push(r);
    }
    let mut aggregates = Vec::new();
    let mut means: BTreeMap<(CellKey, Metric), f64> = BTreeMap::new();
    for (key, runs) in &cells {
        for metric in Metric::ALL {
            let (mean, std) = mean_std(runs.iter().map(|r| r.metric(metric)).collect());
            means.insert((key.clone(), metric), mean);
            aggregates.push(Aggregate {
                country: key.0.clone(),
                relation: key.1,
                model: key.2.clone(),
                metric,
                mean,
                std,
                n_runs: runs.len(),
            });
        }
    }

    let models: Vec<String> = records
        .iter()
        .map(|r| r.model.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let countries: BTreeSet<&str> = records.iter().map(|r| r.country.as_str()).collect();
    let relations: BTreeSet<RelationType> = records.iter().map(|r| r.relation).collect();
    let cell = |country: &str, relation: RelationType, model: &str, metric: Metric| {
        means
            .get(&((country.to_string(), relation, model.to_string()), metric))
            .copied()
    };

    let mut significance_map: BTreeMap<String, BTreeMap<String, RelationSignificance>> =
        BTreeMap::new();
    let groups: Vec<(String, Vec<(&str, RelationType)>)> = match rows {
        StatsRows::CountryPerRelation => relations
            .iter()
            .map(|&rel| {
                (
                    rel.as_str().to_string(),
                    countries.iter().map(|&c| (c, rel)).collect(),
                )
            })
            .collect(),
        StatsRows::CountryRelation => vec![(
            "all".to_string(),
            countries
                .iter()
                .flat_map(|&c| relations.iter().map(move |&rel| (c, rel)))
                .collect(),
        )],
    };
    for (key, row_keys) in groups {
        let mut per_metric = BTreeMap::new();
        for metric in Metric::ALL {
            let labels = row_keys
                .iter()
                .map(|(c, rel)| match rows {
                    StatsRows::CountryPerRelation => c.to_string(),
                    StatsRows::CountryRelation => format!("{c}/{rel}"),
                })
                .collect();
            let table: Vec<Vec<Option<f64>>> = row_keys
                .iter()
                .map(|&(c, rel)| models.iter().map(|m| cell(c, rel, m, metric)).collect())
                .collect();
            per_metric.insert(
                metric.as_str().to_string(),
                significance(labels, &models, &table, alpha),
            );
        }
        significance_map.insert(key, per_metric);
    }

    Ok(ExperimentReport {
        records,
        aggregates,
        significance: significance_map,
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl ExperimentReport {
    /// `country,relation,model,metric,mean,std,n_runs`.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("country,relation,model,metric,mean,std,n_runs\n");
        for a in &self.aggregates {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&a.country),
                a.relation,
                csv_field(&a.model),
                a.metric.as_str(),
                a.mean,
                a.std,
                a.n_runs
            )
            .unwrap();
        }
        out
    }

    /// One line per run and metric: `country,relation,model,run,metric,value`.
    pub fn runs_csv(&self) -> String {
        let mut out = String::from("country,relation,model,run,metric,value\n");
        for r in &self.records {
            for metric in Metric::ALL {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    csv_field(&r.country),
                    r.relation,
                    csv_field(&r.model),
                    r.run,
                    metric.as_str(),
                    r.metric(metric)
                )
                .unwrap();
            }
        }
        out
    }
}
