//! Structural metrics of single-relation networks.
//!
//! All metrics are computed on the undirected projection of the relation's
//! subgraph, over the nodes incident to at least one of its edges.

use std::collections::{BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use super::{KgError, KnowledgeGraph, NodeId, RelationType};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkStats {
    pub num_head_nodes: usize,
    pub num_tail_nodes: usize,
    pub num_edges: usize,
    pub average_degree: f64,
    pub clustering_coefficient: f64,
    pub density: f64,
    pub closeness: f64,
    pub betweenness: f64,
}

/// Simple undirected graph on `0..n` with sorted adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct UndirectedGraph {
    adj: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    /// Self-loops are dropped and parallel edges merged.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Self { adj }
    }

    pub fn num_nodes(&self) -> usize {
        self.adj.len()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }
}

/// Local clustering coefficient per node; 0 for degree < 2.
pub fn local_clustering(g: &UndirectedGraph) -> Vec<f64> {
    (0..g.num_nodes())
        .map(|v| {
            let nbrs = g.neighbors(v);
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (i, &a) in nbrs.iter().enumerate() {
                for &b in &nbrs[i + 1..] {
                    if g.has_edge(a, b) {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect()
}

/// Closeness per node over its reachable set:
/// `(reachable - 1) / sum of distances`, 0 for isolated nodes.
pub fn closeness_centrality(g: &UndirectedGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    (0..n)
        .map(|s| {
            dist.fill(usize::MAX);
            dist[s] = 0;
            queue.push_back(s);
            let (mut reached, mut total) = (0usize, 0usize);
            while let Some(v) = queue.pop_front() {
                reached += 1;
                total += dist[v];
                for &w in g.neighbors(v) {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            if total == 0 {
                0.0
            } else {
                (reached - 1) as f64 / total as f64
            }
        })
        .collect()
}

/// Shortest-path betweenness (Brandes), normalized by the number of
/// unordered pairs not containing the node, `(n-1)(n-2)/2`.
pub fn betweenness_centrality(g: &UndirectedGraph) -> Vec<f64> {
    let n = g.num_nodes();
    let mut centrality = vec![0.0f64; n];
    let mut sigma = vec![0.0f64; n];
    let mut dist = vec![usize::MAX; n];
    let mut delta = vec![0.0f64; n];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    for s in 0..n {
        sigma.fill(0.0);
        dist.fill(usize::MAX);
        delta.fill(0.0);
        preds.iter_mut().for_each(Vec::clear);
        order.clear();
        sigma[s] = 1.0;
        dist[s] = 0;
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in g.neighbors(v) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }
    // Each unordered pair was visited from both endpoints.
    let scale = if n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.0
    };
    centrality.iter_mut().for_each(|c| *c *= scale);
    centrality
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Graph-level summary: `(average degree, clustering, density, closeness,
/// betweenness)`, the last three as node means.
pub fn summarize(g: &UndirectedGraph) -> (f64, f64, f64, f64, f64) {
    let n = g.num_nodes();
    let e = g.num_edges() as f64;
    let (average_degree, density) = match n {
        0 => (0.0, 0.0),
        1 => (0.0, 0.0),
        _ => (2.0 * e / n as f64, 2.0 * e / (n * (n - 1)) as f64),
    };
    (
        average_degree,
        mean(&local_clustering(g)),
        density,
        mean(&closeness_centrality(g)),
        mean(&betweenness_centrality(g)),
    )
}

/// Undirected projection of one relation's subgraph with its nodes
/// relabelled `0..n` in ascending `NodeId` order.
pub fn relation_projection(kg: &KnowledgeGraph, relation: RelationType) -> (UndirectedGraph, Vec<NodeId>) {
    let nodes: BTreeSet<NodeId> = kg
        .edges_of(relation)
        .flat_map(|t| [t.head, t.tail])
        .collect();
    let nodes: Vec<NodeId> = nodes.into_iter().collect();
    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let edges: Vec<(usize, usize)> = kg
        .edges_of(relation)
        .map(|t| (index[&t.head], index[&t.tail]))
        .collect();
    (UndirectedGraph::from_edges(nodes.len(), &edges), nodes)
}

pub fn relation_network_stats(
    kg: &KnowledgeGraph,
    relation: RelationType,
) -> Result<NetworkStats, KgError> {
    if kg.relation_count(relation) == 0 {
        return Err(KgError::EmptyRelation(relation));
    }
    let heads: BTreeSet<NodeId> = kg.edges_of(relation).map(|t| t.head).collect();
    let tails: BTreeSet<NodeId> = kg.edges_of(relation).map(|t| t.tail).collect();
    let (g, _) = relation_projection(kg, relation);
    let (average_degree, clustering_coefficient, density, closeness, betweenness) = summarize(&g);
    Ok(NetworkStats {
        num_head_nodes: heads.len(),
        num_tail_nodes: tails.len(),
        num_edges: g.num_edges(),
        average_degree,
        clustering_coefficient,
        density,
        closeness,
        betweenness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{GraphBuilder, NodeType};

    #[test]
    fn triangle() {
        let g = UndirectedGraph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let (deg, cc, density, close, _) = summarize(&g);
        assert_eq!(cc, 1.0);
        assert_eq!(density, 1.0);
        assert_eq!(deg, 2.0);
        assert_eq!(close, 1.0);
    }

    #[test]
    fn path() {
        let g = UndirectedGraph::from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(local_clustering(&g), vec![0.0; 3]);
        assert_eq!(betweenness_centrality(&g), vec![0.0, 1.0, 0.0]);
        let (_, cc, _, _, bet) = summarize(&g);
        assert_eq!(cc, 0.0);
        assert!((bet - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn star() {
        let g = UndirectedGraph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]);
        let c = closeness_centrality(&g);
        assert_eq!(c[0], 1.0);
        assert!(c[1..].iter().all(|&x| (x - 0.6).abs() < 1e-15));
        let (_, _, _, close, _) = summarize(&g);
        assert!((close - 0.7).abs() < 1e-15);
    }

    #[test]
    fn isolated_node_scores_zero() {
        let g = UndirectedGraph::from_edges(3, &[(0, 1)]);
        let c = closeness_centrality(&g);
        assert_eq!(c, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn complete_graph_is_dense_and_clustered() {
        for n in 3..8 {
            let edges: Vec<_> = (0..n)
                .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
                .collect();
            let g = UndirectedGraph::from_edges(n, &edges);
            let (_, cc, density, _, _) = summarize(&g);
            assert_eq!(density, 1.0);
            assert_eq!(cc, 1.0);
        }
    }

    #[test]
    fn relation_stats_on_bipartite_relation() {
        let mut b = GraphBuilder::new("T");
        let c = b.add_node("c", NodeType::Company).unwrap();
        let u1 = b.add_node("u1", NodeType::Customer).unwrap();
        let u2 = b.add_node("u2", NodeType::Customer).unwrap();
        let u3 = b.add_node("u3", NodeType::Customer).unwrap();
        let p = b.add_node("p", NodeType::Product).unwrap();
        for u in [u1, u2, u3] {
            b.add_edge(c, RelationType::SuppliesTo, u).unwrap();
        }
        b.add_edge(u1, RelationType::Buys, p).unwrap();
        let kg = b.build();
        let s = relation_network_stats(&kg, RelationType::SuppliesTo).unwrap();
        assert_eq!(s.num_head_nodes, 1);
        assert_eq!(s.num_tail_nodes, 3);
        assert_eq!(s.num_edges, 3);
        assert_eq!(s.average_degree, 1.5);
        assert_eq!(s.clustering_coefficient, 0.0);
        assert!((s.closeness - 0.7).abs() < 1e-15);
        assert_eq!(
            relation_network_stats(&kg, RelationType::HasCert),
            Err(KgError::EmptyRelation(RelationType::HasCert))
        );
    }
}
