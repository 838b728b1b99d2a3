//! Synthetic per-country supply-chain graphs.
//!
//! Node counts and per-relation edge counts follow a [`CountryProfile`]
//! exactly. `UniformRandom` draws each relation's pairs uniformly without
//! replacement from its type-consistent candidate space; `PlantedBlocks`
//! splits every node type into `n_blocks` contiguous groups and places a
//! fixed share of each relation's edges between aligned groups (block `i`
//! of the head type with block `i` of the tail type), which gives link
//! prediction a recoverable latent structure.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index;
use thiserror::Error;

use crate::kg::{GraphBuilder, KnowledgeGraph, NodeId, NodeType, RelationType};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("{country}: {relation} requests {requested} edges but only {available} type-consistent pairs exist")]
    Infeasible {
        country: String,
        relation: RelationType,
        requested: usize,
        available: usize,
    },
    #[error("profile field `{field}`: {message}")]
    InvalidProfile { field: String, message: String },
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountryProfile {
    pub name: String,
    pub n_company: usize,
    pub n_customer: usize,
    pub n_product: usize,
    pub n_certificate: usize,
    pub edges_per_relation: BTreeMap<RelationType, usize>,
}

impl CountryProfile {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        n_company: usize,
        n_customer: usize,
        n_product: usize,
        n_certificate: usize,
        supplies_to: usize,
        buys: usize,
        made_by: usize,
        has_cert: usize,
    ) -> Self {
        let edges_per_relation = RelationType::ALL
            .into_iter()
            .zip([supplies_to, buys, made_by, has_cert])
            .collect();
        Self {
            name: name.to_string(),
            n_company,
            n_customer,
            n_product,
            n_certificate,
            edges_per_relation,
        }
    }

    pub fn node_count(&self, ty: NodeType) -> usize {
        match ty {
            NodeType::Company => self.n_company,
            NodeType::Customer => self.n_customer,
            NodeType::Product => self.n_product,
            NodeType::Certificate => self.n_certificate,
        }
    }

    pub fn edge_count(&self, relation: RelationType) -> usize {
        self.edges_per_relation.get(&relation).copied().unwrap_or(0)
    }

    pub fn total_nodes(&self) -> usize {
        NodeType::ALL.iter().map(|&t| self.node_count(t)).sum()
    }

    pub fn total_edges(&self) -> usize {
        self.edges_per_relation.values().sum()
    }

    pub fn candidate_pairs(&self, relation: RelationType) -> usize {
        let (h, t) = relation.signature();
        self.node_count(h) * self.node_count(t)
    }

    /// Checks positivity of every count; feasibility of edge counts is
    /// reported by [`generate_country_graph`] as [`SynthError::Infeasible`].
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |field: &str| SynthError::InvalidProfile {
            field: field.to_string(),
            message: "must be > 0".to_string(),
        };
        for ty in NodeType::ALL {
            if self.node_count(ty) == 0 {
                return Err(bad(&format!("n_{ty}")));
            }
        }
        for r in RelationType::ALL {
            if self.edge_count(r) == 0 {
                return Err(bad(&format!("edges.{r}")));
            }
        }
        Ok(())
    }

    /// Same node counts with every relation's edge count scaled by
    /// `fraction` (rounded, at least 3 so the graph can still be split).
    pub fn with_edge_fraction(&self, fraction: f64) -> Self {
        let mut scaled = self.clone();
        for count in scaled.edges_per_relation.values_mut() {
            *count = ((*count as f64 * fraction).round() as usize).max(3);
        }
        scaled
    }

    /// Parses the `key=value` profile format.
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| SynthError::InvalidProfile {
                field: line.to_string(),
                message: "expected key=value".to_string(),
            })?;
            fields.insert(key.trim().to_string(), value.trim().to_string());
        }
        let mut take = |key: &str| {
            fields.remove(key).ok_or_else(|| SynthError::InvalidProfile {
                field: key.to_string(),
                message: "missing".to_string(),
            })
        };
        let name = take("name")?;
        let mut count = |key: &str| -> Result<usize, SynthError> {
            let v = take(key)?;
            v.parse::<usize>().map_err(|_| SynthError::InvalidProfile {
                field: key.to_string(),
                message: format!("expected a non-negative integer, got {v:?}"),
            })
        };
        let n_company = count("n_company")?;
        let n_customer = count("n_customer")?;
        let n_product = count("n_product")?;
        let n_certificate = count("n_certificate")?;
        let mut edges = [0usize; 4];
        for r in RelationType::ALL {
            edges[r.index()] = count(&format!("edges.{r}"))?;
        }
        if let Some(extra) = fields.keys().next() {
            return Err(SynthError::InvalidProfile {
                field: extra.clone(),
                message: "unknown key".to_string(),
            });
        }
        let profile = Self::new(
            &name,
            n_company,
            n_customer,
            n_product,
            n_certificate,
            edges[0],
            edges[1],
            edges[2],
            edges[3],
        );
        profile.validate()?;
        Ok(profile)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name={}", self.name);
        for ty in NodeType::ALL {
            let _ = writeln!(s, "n_{ty}={}", self.node_count(ty));
        }
        for r in RelationType::ALL {
            let _ = writeln!(s, "edges.{r}={}", self.edge_count(r));
        }
        s
    }
}

/// The ten per-country profiles, country names spelled as published.
pub fn default_profiles() -> Vec<CountryProfile> {
    vec![
        CountryProfile::new("BARZIL", 173, 200, 341, 5, 1_057, 5_163, 4_742, 504),
        CountryProfile::new("CHINA", 7_287, 963, 868, 5, 33_706, 79_209, 65_422, 12_704),
        CountryProfile::new("GERMANY", 707, 613, 728, 5, 7_655, 51_445, 10_537, 1_877),
        CountryProfile::new("INDIA", 731, 510, 622, 5, 5_193, 27_272, 8_625, 1_427),
        CountryProfile::new("JAPAN", 2_975, 980, 883, 5, 16_227, 71_582, 30_559, 3_671),
        CountryProfile::new("KOREA", 710, 291, 685, 5, 2_573, 12_409, 6_816, 1_715),
        CountryProfile::new("TAIWAN", 186, 239, 374, 5, 957, 6_189, 4_490, 1_029),
        CountryProfile::new("THAILAND", 555, 336, 479, 4, 2_431, 9_001, 7_821, 1_026),
        CountryProfile::new("UK", 386, 220, 433, 5, 1_823, 7_630, 4_114, 1_022),
        CountryProfile::new("USA", 807, 600, 742, 5, 5_157, 41_876, 16_873, 2_468),
    ]
}

pub fn default_profile(name: &str) -> Option<CountryProfile> {
    default_profiles()
        .into_iter()
        .find(|p| p.name.eq_ignore_ascii_case(name))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthMode {
    UniformRandom,
    PlantedBlocks,
}

impl std::str::FromStr for SynthMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "uniformrandom" | "uniform_random" => Ok(SynthMode::UniformRandom),
            "planted" | "plantedblocks" | "planted_blocks" => Ok(SynthMode::PlantedBlocks),
            other => Err(format!("unknown synth mode {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub profile: CountryProfile,
    pub mode: SynthMode,
    pub n_blocks: usize,
    pub intra_block_prob_mass: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn uniform(profile: CountryProfile, seed: u64) -> Self {
        Self {
            profile,
            mode: SynthMode::UniformRandom,
            n_blocks: 1,
            intra_block_prob_mass: 1.0,
            seed,
        }
    }

    pub fn planted(profile: CountryProfile, n_blocks: usize, mass: f64, seed: u64) -> Self {
        Self {
            profile,
            mode: SynthMode::PlantedBlocks,
            n_blocks,
            intra_block_prob_mass: mass,
            seed,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        self.profile.validate()?;
        if self.n_blocks == 0 {
            return Err(SynthError::InvalidConfig("n_blocks must be >= 1".into()));
        }
        if self.mode == SynthMode::PlantedBlocks && self.n_blocks < 2 {
            return Err(SynthError::InvalidConfig(
                "planted blocks need n_blocks >= 2".into(),
            ));
        }
        let m = self.intra_block_prob_mass;
        if !(m > 0.0 && m <= 1.0) {
            return Err(SynthError::InvalidConfig(format!(
                "intra_block_prob_mass must lie in (0, 1], got {m}"
            )));
        }
        Ok(())
    }
}

/// Contiguous block partition: item `i` of `n` belongs to block
/// `floor(i * blocks / n)`.
pub fn block_of(i: usize, n: usize, blocks: usize) -> usize {
    i * blocks / n
}

fn block_range(b: usize, n: usize, blocks: usize) -> (usize, usize) {
    ((b * n).div_ceil(blocks), ((b + 1) * n).div_ceil(blocks))
}

/// Block membership of every node of a generated graph, from its position
/// within its type.
#[derive(Debug, Clone)]
pub struct BlockLayout {
    blocks: Vec<usize>,
}

impl BlockLayout {
    pub fn new(kg: &KnowledgeGraph, n_blocks: usize) -> Self {
        let mut blocks = vec![0; kg.num_nodes()];
        for ty in NodeType::ALL {
            let nodes = kg.nodes_of_type(ty);
            for (i, v) in nodes.iter().enumerate() {
                blocks[v.index()] = block_of(i, nodes.len(), n_blocks);
            }
        }
        Self { blocks }
    }

    pub fn block(&self, node: NodeId) -> usize {
        self.blocks[node.index()]
    }

    pub fn aligned(&self, a: NodeId, b: NodeId) -> bool {
        self.block(a) == self.block(b)
    }
}

/// Per-head slice of the tail range: either the head's aligned block or its
/// complement. Maps a flat index in that restricted pair space to a pair.
struct PairSpace {
    // prefix[i] = number of pairs owned by heads 0..i
    prefix: Vec<usize>,
    ranges: Vec<(usize, usize)>,
    aligned: bool,
}

impl PairSpace {
    fn new(nh: usize, nt: usize, blocks: usize, aligned: bool) -> Self {
        let mut prefix = Vec::with_capacity(nh + 1);
        let mut ranges = Vec::with_capacity(nh);
        prefix.push(0);
        for i in 0..nh {
            let (lo, hi) = block_range(block_of(i, nh, blocks), nt, blocks);
            let owned = if aligned { hi - lo } else { nt - (hi - lo) };
            prefix.push(prefix[i] + owned);
            ranges.push((lo, hi));
        }
        Self {
            prefix,
            ranges,
            aligned,
        }
    }

    fn len(&self) -> usize {
        *self.prefix.last().unwrap_or(&0)
    }

    fn pair(&self, k: usize) -> (usize, usize) {
        let head = self.prefix.partition_point(|&p| p <= k) - 1;
        let j = k - self.prefix[head];
        let (lo, hi) = self.ranges[head];
        let tail = if self.aligned {
            lo + j
        } else if j < lo {
            j
        } else {
            j + (hi - lo)
        };
        (head, tail)
    }
}

pub fn generate_country_graph(config: &SynthConfig) -> Result<KnowledgeGraph, SynthError> {
    config.validate()?;
    let profile = &config.profile;
    let mut builder = GraphBuilder::new(profile.name.clone());
    let mut ids: [Vec<NodeId>; 4] = Default::default();
    for ty in NodeType::ALL {
        ids[ty.index()] = (0..profile.node_count(ty))
            .map(|i| {
                builder
                    .add_node(&format!("{ty}_{i}"), ty)
                    .expect("generated labels are valid")
            })
            .collect();
    }

    for relation in RelationType::ALL {
        let requested = profile.edge_count(relation);
        let available = profile.candidate_pairs(relation);
        if requested > available {
            return Err(SynthError::Infeasible {
                country: profile.name.clone(),
                relation,
                requested,
                available,
            });
        }
        let (ht, tt) = relation.signature();
        let heads = &ids[ht.index()];
        let tails = &ids[tt.index()];
        let mut rng = seed::rng(seed::derive(config.seed, &[relation.index() as u64]));
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(requested);
        match config.mode {
            SynthMode::UniformRandom => {
                let nt = tails.len();
                pairs.extend(
                    index::sample(&mut rng, available, requested)
                        .into_iter()
                        .map(|k| (k / nt, k % nt)),
                );
            }
            SynthMode::PlantedBlocks => {
                let inside = PairSpace::new(heads.len(), tails.len(), config.n_blocks, true);
                let outside = PairSpace::new(heads.len(), tails.len(), config.n_blocks, false);
                // Aligned capacity can be smaller than the target share when a
                // type has few nodes (certificates); the excess goes outside.
                let target = (config.intra_block_prob_mass * requested as f64).round() as usize;
                let mut n_in = target.min(inside.len());
                let mut n_out = requested - n_in;
                if n_out > outside.len() {
                    n_out = outside.len();
                    n_in = requested - n_out;
                }
                pairs.extend(
                    index::sample(&mut rng, inside.len(), n_in)
                        .into_iter()
                        .map(|k| inside.pair(k)),
                );
                pairs.extend(
                    index::sample(&mut rng, outside.len(), n_out)
                        .into_iter()
                        .map(|k| outside.pair(k)),
                );
            }
        }
        for (h, t) in pairs {
            builder
                .add_edge(heads[h], relation, tails[t])
                .expect("generated pairs are type-consistent");
        }
    }
    Ok(builder.build())
}
