use std::collections::{BTreeMap, HashMap, HashSet};

use rand::Rng;

use super::{KgError, KnowledgeGraph, NodeId, RelationType, Triple};
use crate::seed;

/// Draws one negative per positive by corrupting its tail to a uniformly
/// chosen node of the relation's tail type.
///
/// A head that already links to every candidate tail (common for
/// `has_cert`, which has only a handful of certificates) cannot be
/// tail-corrupted; its negative is drawn as a uniform type-consistent pair
/// instead. Returned triples are absent from `kg`, pairwise distinct, and
/// grouped by relation in canonical order.
pub fn sample_negatives(
    kg: &KnowledgeGraph,
    positives: &[Triple],
    seed: u64,
) -> Result<Vec<Triple>, KgError> {
    let mut by_relation: BTreeMap<RelationType, Vec<Triple>> = BTreeMap::new();
    for t in positives {
        by_relation.entry(t.relation).or_default().push(*t);
    }
    let mut out = Vec::with_capacity(positives.len());
    for (relation, mut group) in by_relation {
        group.sort_unstable();
        group.dedup();
        let mut rng = seed::rng(seed::derive(seed, &[relation.index() as u64]));
        out.extend(sample_relation(kg, relation, &group, &mut rng)?);
    }
    Ok(out)
}

fn sample_relation(
    kg: &KnowledgeGraph,
    relation: RelationType,
    group: &[Triple],
    rng: &mut impl Rng,
) -> Result<Vec<Triple>, KgError> {
    let (head_type, tail_type) = relation.signature();
    let heads = kg.nodes_of_type(head_type);
    let tails = kg.nodes_of_type(tail_type);
    let exhausted = || KgError::ExhaustedCandidates {
        relation,
        wanted: group.len(),
    };

    let existing = kg.relation_count(relation);
    let space = heads.len() * tails.len();
    if space < existing + group.len() || tails.is_empty() {
        return Err(exhausted());
    }

    let mut taken_per_head: HashMap<NodeId, usize> = HashMap::new();
    for t in kg.edges_of(relation) {
        *taken_per_head.entry(t.head).or_default() += 1;
    }
    let mut chosen: HashSet<Triple> = HashSet::with_capacity(group.len());
    let mut out = Vec::with_capacity(group.len());
    let mut budget = 100 * group.len();

    for positive in group {
        let saturated = taken_per_head.get(&positive.head).copied().unwrap_or(0) >= tails.len();
        loop {
            if budget == 0 {
                return Err(exhausted());
            }
            budget -= 1;
            let head = if saturated {
                heads[rng.gen_range(0..heads.len())]
            } else {
                positive.head
            };
            let tail = tails[rng.gen_range(0..tails.len())];
            let candidate = Triple::new(head, relation, tail);
            if head == tail || kg.contains(&candidate) || chosen.contains(&candidate) {
                continue;
            }
            chosen.insert(candidate);
            *taken_per_head.entry(head).or_default() += 1;
            out.push(candidate);
            break;
        }
    }
    Ok(out)
}
