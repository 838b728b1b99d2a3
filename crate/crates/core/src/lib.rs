//! Federated link prediction over typed supply-chain knowledge graphs.
//!
//! Each client (one country) keeps its graph, node embeddings and GraphSAGE
//! layers private; only the three-layer prediction head is exchanged and
//! averaged by the server.
//!
//! Module map:
//! - [`kg`]: typed graph model, splits, negative sampling, structural metrics
//! - [`synth`]: per-country synthetic graph generation
//! - [`nn`]: dense numerics, prediction head, BCE, Adam, gradient checking
//! - [`sage`]: neighbor sampling, mean-aggregation encoder, link scorer
//! - [`fed`]: clients, server round loop and the five training regimes
//! - [`eval`]: ROC-AUC / AP, run aggregation, Friedman and Nemenyi tests

pub mod eval;
pub mod fed;
pub mod kg;
pub mod nn;
pub mod sage;
pub mod seed;
pub mod synth;

pub use kg::{KnowledgeGraph, NodeId, NodeType, RelationType, Triple};
