use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{sample_negatives, KgError, KnowledgeGraph, RelationType, Triple};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SplitPart {
    Train,
    Valid,
    Test,
}

impl SplitPart {
    pub const ALL: [SplitPart; 3] = [SplitPart::Train, SplitPart::Valid, SplitPart::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            SplitPart::Train => "train",
            SplitPart::Valid => "valid",
            SplitPart::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            valid: 0.1,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    fn validate(&self) -> Result<(), KgError> {
        let parts = [self.train, self.valid, self.test];
        let ok = parts.iter().all(|r| r.is_finite() && *r >= 0.0)
            && (parts.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        if ok {
            Ok(())
        } else {
            Err(KgError::InvalidRatios((self.train, self.valid, self.test)))
        }
    }

    /// `(train, valid, test)` sizes for `n` edges: valid and test are
    /// floored, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let floor = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
        let valid = floor(self.valid);
        let test = floor(self.test);
        (n - valid - test, valid, test)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct PartData {
    positives: BTreeMap<RelationType, Vec<Triple>>,
    negatives: BTreeMap<RelationType, Vec<Triple>>,
}

/// Per-relation train/valid/test positives with equal-sized negatives.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSplit {
    parts: [PartData; 3],
}

impl EdgeSplit {
    pub fn positives(&self, part: SplitPart, relation: RelationType) -> &[Triple] {
        self.parts[part as usize]
            .positives
            .get(&relation)
            .map_or(&[], Vec::as_slice)
    }

    pub fn negatives(&self, part: SplitPart, relation: RelationType) -> &[Triple] {
        self.parts[part as usize]
            .negatives
            .get(&relation)
            .map_or(&[], Vec::as_slice)
    }

    /// Relations present in this split, in canonical order.
    pub fn relations(&self) -> Vec<RelationType> {
        self.parts[SplitPart::Train as usize]
            .positives
            .keys()
            .copied()
            .collect()
    }

    pub fn all_positives(&self, part: SplitPart) -> impl Iterator<Item = &Triple> + '_ {
        self.parts[part as usize].positives.values().flatten()
    }

    pub fn all_negatives(&self, part: SplitPart) -> impl Iterator<Item = &Triple> + '_ {
        self.parts[part as usize].negatives.values().flatten()
    }

    /// Positives labelled 1 followed by negatives labelled 0, for every
    /// relation of `part`.
    pub fn labelled(&self, part: SplitPart) -> Vec<(Triple, f64)> {
        self.all_positives(part)
            .map(|&t| (t, 1.0))
            .chain(self.all_negatives(part).map(|&t| (t, 0.0)))
            .collect()
    }
}

/// Seeded per-relation shuffle into train/valid/test, followed by negative
/// sampling for each part.
pub fn split_edges(
    kg: &KnowledgeGraph,
    ratios: SplitRatios,
    seed: u64,
) -> Result<EdgeSplit, KgError> {
    ratios.validate()?;
    let mut parts: [PartData; 3] = Default::default();
    for relation in RelationType::ALL {
        let mut edges: Vec<Triple> = kg.edges_of(relation).copied().collect();
        if edges.is_empty() {
            continue;
        }
        if edges.len() < 3 {
            return Err(KgError::TooFewEdges {
                relation,
                count: edges.len(),
            });
        }
        let mut rng = seed::rng(seed::derive(seed, &[relation.index() as u64]));
        edges.shuffle(&mut rng);
        let (_, n_valid, n_test) = ratios.sizes(edges.len());
        let test = edges.split_off(edges.len() - n_test);
        let valid = edges.split_off(edges.len() - n_valid);
        for (part, mut set) in [(SplitPart::Train, edges), (SplitPart::Valid, valid), (SplitPart::Test, test)] {
            set.sort_unstable();
            parts[part as usize].positives.insert(relation, set);
        }
    }
    for part in SplitPart::ALL {
        let data = &mut parts[part as usize];
        let positives: Vec<Triple> = data.positives.values().flatten().copied().collect();
        let negatives = sample_negatives(kg, &positives, seed::derive(seed, &[100, part as u64]))?;
        for relation in data.positives.keys() {
            data.negatives.insert(relation.to_owned(), Vec::new());
        }
        for t in negatives {
            data.negatives.entry(t.relation).or_default().push(t);
        }
    }
    Ok(EdgeSplit { parts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphBuilder, NodeType};
    use std::collections::BTreeSet;

    fn bipartite(n_company: usize, n_customer: usize, edges: usize) -> KnowledgeGraph {
        let mut b = GraphBuilder::new("T");
        let cs: Vec<_> = (0..n_company)
            .map(|i| b.add_node(&format!("c{i}"), NodeType::Company).unwrap())
            .collect();
        let us: Vec<_> = (0..n_customer)
            .map(|i| b.add_node(&format!("u{i}"), NodeType::Customer).unwrap())
            .collect();
        let mut added = 0;
        'outer: for c in &cs {
            for u in &us {
                if added == edges {
                    break 'outer;
                }
                b.add_edge(*c, RelationType::SuppliesTo, *u).unwrap();
                added += 1;
            }
        }
        b.build()
    }

    #[test]
    fn floor_and_remainder_sizes() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(100), (70, 10, 20));
        assert_eq!(r.sizes(11), (8, 1, 2));
        assert_eq!(r.sizes(3), (3, 0, 0));
        assert_eq!(r.sizes(10), (7, 1, 2));
    }

    #[test]
    fn split_partitions_edges() {
        let kg = bipartite(20, 20, 100);
        let split = split_edges(&kg, SplitRatios::default(), 7).unwrap();
        let r = RelationType::SuppliesTo;
        assert_eq!(split.positives(SplitPart::Train, r).len(), 70);
        assert_eq!(split.positives(SplitPart::Valid, r).len(), 10);
        assert_eq!(split.positives(SplitPart::Test, r).len(), 20);
        let union: BTreeSet<Triple> = SplitPart::ALL
            .iter()
            .flat_map(|&p| split.positives(p, r).iter().copied())
            .collect();
        assert_eq!(union.len(), 100);
        assert!(union.iter().all(|t| kg.contains(t)));
        for part in SplitPart::ALL {
            assert_eq!(split.negatives(part, r).len(), split.positives(part, r).len());
            assert!(split.negatives(part, r).iter().all(|t| !kg.contains(t)));
        }
    }

    #[test]
    fn eleven_edges() {
        let kg = bipartite(6, 6, 11);
        let split = split_edges(&kg, SplitRatios::default(), 1).unwrap();
        let r = RelationType::SuppliesTo;
        assert_eq!(split.positives(SplitPart::Valid, r).len(), 1);
        assert_eq!(split.positives(SplitPart::Test, r).len(), 2);
        assert_eq!(split.positives(SplitPart::Train, r).len(), 8);
    }

    #[test]
    fn deterministic_given_seed() {
        let kg = bipartite(12, 12, 60);
        let a = split_edges(&kg, SplitRatios::default(), 42).unwrap();
        let b = split_edges(&kg, SplitRatios::default(), 42).unwrap();
        let c = split_edges(&kg, SplitRatios::default(), 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn too_few_edges() {
        let kg = bipartite(2, 2, 2);
        assert_eq!(
            split_edges(&kg, SplitRatios::default(), 0),
            Err(KgError::TooFewEdges {
                relation: RelationType::SuppliesTo,
                count: 2
            })
        );
    }

    #[test]
    fn invalid_ratios() {
        let kg = bipartite(4, 4, 10);
        let bad = SplitRatios {
            train: 0.5,
            valid: 0.1,
            test: 0.1,
        };
        assert!(matches!(
            split_edges(&kg, bad, 0),
            Err(KgError::InvalidRatios(_))
        ));
    }
}
