//! Typed supply-chain knowledge graph.
//!
//! Nodes carry one of four types and edges one of four relations, each
//! relation with a fixed `(head type, tail type)` signature. Graphs are
//! immutable once built; per-direction adjacency is materialized at
//! construction and kept sorted.

mod io;
pub mod metrics;
mod negatives;
mod split;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_graph, read_graph_file, write_graph, write_graph_file};
pub use metrics::{relation_network_stats, NetworkStats};
pub use negatives::sample_negatives;
pub use split::{split_edges, EdgeSplit, SplitPart, SplitRatios};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KgError {
    #[error("schema violation: {relation} expects ({expected_head}, {expected_tail}), got ({head}, {tail})")]
    SchemaViolation {
        relation: RelationType,
        expected_head: NodeType,
        expected_tail: NodeType,
        head: NodeType,
        tail: NodeType,
    },
    #[error("self-loop on node {0:?}")]
    SelfLoop(String),
    #[error("invalid node label {0:?}")]
    InvalidLabel(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("relation {relation} has {count} edges, at least 3 are required to split")]
    TooFewEdges { relation: RelationType, count: usize },
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    InvalidRatios((f64, f64, f64)),
    #[error("could not sample {wanted} negatives for {relation} from the candidate space")]
    ExhaustedCandidates { relation: RelationType, wanted: usize },
    #[error("relation {0} has no edges")]
    EmptyRelation(RelationType),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for KgError {
    fn from(e: std::io::Error) -> Self {
        KgError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeType {
    Company,
    Customer,
    Product,
    Certificate,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::Company,
        NodeType::Customer,
        NodeType::Product,
        NodeType::Certificate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeType::Company => "company",
            NodeType::Customer => "customer",
            NodeType::Product => "product",
            NodeType::Certificate => "certificate",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "company" => Ok(NodeType::Company),
            "customer" => Ok(NodeType::Customer),
            "product" => Ok(NodeType::Product),
            "certificate" | "certification" => Ok(NodeType::Certificate),
            other => Err(format!("unknown node type {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RelationType {
    SuppliesTo,
    Buys,
    MadeBy,
    HasCert,
}

impl RelationType {
    pub const ALL: [RelationType; 4] = [
        RelationType::SuppliesTo,
        RelationType::Buys,
        RelationType::MadeBy,
        RelationType::HasCert,
    ];

    /// `(head type, tail type)` allowed for this relation.
    pub fn signature(self) -> (NodeType, NodeType) {
        match self {
            RelationType::SuppliesTo => (NodeType::Company, NodeType::Customer),
            RelationType::Buys => (NodeType::Customer, NodeType::Product),
            RelationType::MadeBy => (NodeType::Product, NodeType::Company),
            RelationType::HasCert => (NodeType::Company, NodeType::Certificate),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RelationType::SuppliesTo => "supplies_to",
            RelationType::Buys => "buys",
            RelationType::MadeBy => "made_by",
            RelationType::HasCert => "has_cert",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelationType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "supplies_to" => Ok(RelationType::SuppliesTo),
            "buys" => Ok(RelationType::Buys),
            "made_by" => Ok(RelationType::MadeBy),
            "has_cert" => Ok(RelationType::HasCert),
            other => Err(format!("unknown relation {other:?}")),
        }
    }
}

/// Dense node index, assigned in interning order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub head: NodeId,
    pub relation: RelationType,
    pub tail: NodeId,
}

impl Triple {
    pub fn new(head: NodeId, relation: RelationType, tail: NodeId) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// A triple as it appears in interchange files: labels plus declared types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTriple {
    pub head: String,
    pub head_type: NodeType,
    pub relation: RelationType,
    pub tail: String,
    pub tail_type: NodeType,
}

impl LabeledTriple {
    pub fn new(
        head: impl Into<String>,
        head_type: NodeType,
        relation: RelationType,
        tail: impl Into<String>,
        tail_type: NodeType,
    ) -> Self {
        Self {
            head: head.into(),
            head_type,
            relation,
            tail: tail.into(),
            tail_type,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Direction {
    In,
    Out,
    #[default]
    Both,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::Both => "both",
        }
    }
}

impl FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "in" => Ok(Direction::In),
            "out" => Ok(Direction::Out),
            "both" => Ok(Direction::Both),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// Immutable typed graph for one country.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    country: String,
    node_types: Vec<NodeType>,
    labels: Vec<String>,
    edges: BTreeSet<Triple>,
    out_adj: Vec<Vec<(NodeId, RelationType)>>,
    in_adj: Vec<Vec<(NodeId, RelationType)>>,
    // Distinct neighbor ids over both directions.
    undirected: Vec<Vec<NodeId>>,
    by_type: [Vec<NodeId>; 4],
    by_relation: [Vec<Triple>; 4],
}

impl KnowledgeGraph {
    pub fn country(&self) -> &str {
        &self.country
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_type(&self, node: NodeId) -> Option<NodeType> {
        self.node_types.get(node.index()).copied()
    }

    pub fn label(&self, node: NodeId) -> Option<&str> {
        self.labels.get(node.index()).map(String::as_str)
    }

    pub fn nodes_of_type(&self, ty: NodeType) -> &[NodeId] {
        &self.by_type[ty.index()]
    }

    pub fn edges(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.edges.iter()
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.edges.contains(triple)
    }

    /// Edges of one relation in `Triple` order.
    pub fn edges_of(&self, relation: RelationType) -> impl Iterator<Item = &Triple> + '_ {
        self.by_relation[relation.index()].iter()
    }

    pub fn relation_count(&self, relation: RelationType) -> usize {
        self.by_relation[relation.index()].len()
    }

    pub fn has_node(&self, node: NodeId) -> bool {
        node.index() < self.num_nodes()
    }

    /// Adjacency of `node`, sorted by `(neighbor, relation)`.
    pub fn neighbors(
        &self,
        node: NodeId,
        direction: Direction,
    ) -> Result<Vec<(NodeId, RelationType)>, KgError> {
        if !self.has_node(node) {
            return Err(KgError::UnknownNode(node));
        }
        let i = node.index();
        Ok(match direction {
            Direction::Out => self.out_adj[i].clone(),
            Direction::In => self.in_adj[i].clone(),
            Direction::Both => {
                let mut all = self.in_adj[i].clone();
                all.extend_from_slice(&self.out_adj[i]);
                all.sort_unstable();
                all
            }
        })
    }

    /// Distinct neighbor ids of `node` in ascending order. Panics on an
    /// out-of-range id; callers validate with [`KnowledgeGraph::has_node`].
    pub fn neighbor_ids(&self, node: NodeId, direction: Direction) -> Vec<NodeId> {
        let i = node.index();
        match direction {
            Direction::Both => self.undirected[i].clone(),
            Direction::Out => dedup_ids(&self.out_adj[i]),
            Direction::In => dedup_ids(&self.in_adj[i]),
        }
    }

    pub(crate) fn undirected_slice(&self, node: NodeId) -> &[NodeId] {
        &self.undirected[node.index()]
    }

    /// Same node table, restricted to `edges` (which must be edges of `self`).
    pub fn with_edges<'a>(&self, edges: impl IntoIterator<Item = &'a Triple>) -> KnowledgeGraph {
        let edges: BTreeSet<Triple> = edges
            .into_iter()
            .filter(|t| self.edges.contains(t))
            .copied()
            .collect();
        Self::assemble(
            self.country.clone(),
            self.node_types.clone(),
            self.labels.clone(),
            edges,
        )
    }

    fn assemble(
        country: String,
        node_types: Vec<NodeType>,
        labels: Vec<String>,
        edges: BTreeSet<Triple>,
    ) -> Self {
        let n = node_types.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        for t in &edges {
            out_adj[t.head.index()].push((t.tail, t.relation));
            in_adj[t.tail.index()].push((t.head, t.relation));
        }
        for list in out_adj.iter_mut().chain(in_adj.iter_mut()) {
            list.sort_unstable();
        }
        let undirected = (0..n)
            .map(|i| {
                let mut ids: Vec<NodeId> = out_adj[i]
                    .iter()
                    .chain(in_adj[i].iter())
                    .map(|&(v, _)| v)
                    .collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();
        let mut by_type: [Vec<NodeId>; 4] = Default::default();
        for (i, ty) in node_types.iter().enumerate() {
            by_type[ty.index()].push(NodeId(i as u32));
        }
        let mut by_relation: [Vec<Triple>; 4] = Default::default();
        for t in &edges {
            by_relation[t.relation.index()].push(*t);
        }
        Self {
            country,
            node_types,
            labels,
            edges,
            out_adj,
            in_adj,
            undirected,
            by_type,
            by_relation,
        }
    }
}

fn dedup_ids(list: &[(NodeId, RelationType)]) -> Vec<NodeId> {
    let mut ids: Vec<NodeId> = list.iter().map(|&(v, _)| v).collect();
    ids.dedup();
    ids
}

/// Incremental graph construction with label interning keyed by
/// `(type, label)`.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    country: String,
    node_types: Vec<NodeType>,
    labels: Vec<String>,
    index: HashMap<(NodeType, String), NodeId>,
    edges: BTreeSet<Triple>,
}

impl GraphBuilder {
    pub fn new(country: impl Into<String>) -> Self {
        Self {
            country: country.into(),
            ..Self::default()
        }
    }

    /// Interns `(ty, label)`, returning the existing id when already known.
    pub fn add_node(&mut self, label: &str, ty: NodeType) -> Result<NodeId, KgError> {
        if label.is_empty() || label.contains(['\t', '\n', '\r']) {
            return Err(KgError::InvalidLabel(label.to_string()));
        }
        if let Some(&id) = self.index.get(&(ty, label.to_string())) {
            return Ok(id);
        }
        let id = NodeId(self.node_types.len() as u32);
        self.node_types.push(ty);
        self.labels.push(label.to_string());
        self.index.insert((ty, label.to_string()), id);
        Ok(id)
    }

    /// Adds an edge between existing nodes. Returns `false` for a duplicate.
    pub fn add_edge(
        &mut self,
        head: NodeId,
        relation: RelationType,
        tail: NodeId,
    ) -> Result<bool, KgError> {
        let head_type = *self
            .node_types
            .get(head.index())
            .ok_or(KgError::UnknownNode(head))?;
        let tail_type = *self
            .node_types
            .get(tail.index())
            .ok_or(KgError::UnknownNode(tail))?;
        if head == tail {
            return Err(KgError::SelfLoop(self.labels[head.index()].clone()));
        }
        let (expected_head, expected_tail) = relation.signature();
        if head_type != expected_head || tail_type != expected_tail {
            return Err(KgError::SchemaViolation {
                relation,
                expected_head,
                expected_tail,
                head: head_type,
                tail: tail_type,
            });
        }
        Ok(self.edges.insert(Triple::new(head, relation, tail)))
    }

    pub fn add_triple(&mut self, t: &LabeledTriple) -> Result<bool, KgError> {
        if t.head == t.tail && t.head_type == t.tail_type {
            return Err(KgError::SelfLoop(t.head.clone()));
        }
        let (expected_head, expected_tail) = t.relation.signature();
        if t.head_type != expected_head || t.tail_type != expected_tail {
            return Err(KgError::SchemaViolation {
                relation: t.relation,
                expected_head,
                expected_tail,
                head: t.head_type,
                tail: t.tail_type,
            });
        }
        let h = self.add_node(&t.head, t.head_type)?;
        let tl = self.add_node(&t.tail, t.tail_type)?;
        self.add_edge(h, t.relation, tl)
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn build(self) -> KnowledgeGraph {
        KnowledgeGraph::assemble(self.country, self.node_types, self.labels, self.edges)
    }
}

/// Builds a graph from labeled triples; duplicates collapse to one edge.
pub fn build_graph<I>(triples: I, country_tag: &str) -> Result<KnowledgeGraph, KgError>
where
    I: IntoIterator<Item = LabeledTriple>,
{
    let mut builder = GraphBuilder::new(country_tag);
    for t in triples {
        builder.add_triple(&t)?;
    }
    Ok(builder.build())
}
