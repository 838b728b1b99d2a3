//! GraphSAGE encoder with mean aggregation and the dot-product link scorer.
//!
//! Layer `l` maps every node `v` of its computation set to
//! `ReLU(W_l · mean({h_{l-1}(v)} ∪ {h_{l-1}(u) : u sampled from N(v)}))`.
//! Neighbor samples are keyed by `(seed, layer, node)`, so a node's sample is
//! the same whichever batch it appears in.

use rand::seq::index;
use rand::Rng;
use thiserror::Error;

use crate::kg::{Direction, KgError, KnowledgeGraph, NodeId, Triple};
use crate::nn::{
    bce_loss, sigmoid, Activation, DenseLayer, HeadGrads, HeadModule, HeadTrace, Matrix,
    NamedTensor, NnError,
};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SageError {
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("invalid encoder parameters: {0}")]
    InvalidParams(String),
    #[error("empty batch")]
    EmptyBatch,
}

/// Node embeddings plus one weight matrix per aggregation layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    /// One row per graph node.
    pub embeddings: Matrix,
    /// `layers[l]` is `d_out × d_in`.
    pub layers: Vec<Matrix>,
    pub k_sample: usize,
    pub direction: Direction,
}

impl EncoderParams {
    pub fn new(
        embeddings: Matrix,
        layers: Vec<Matrix>,
        k_sample: usize,
        direction: Direction,
    ) -> Result<Self, SageError> {
        let params = Self {
            embeddings,
            layers,
            k_sample,
            direction,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<(), SageError> {
        if self.layers.is_empty() {
            return Err(SageError::InvalidParams("at least one layer is required".into()));
        }
        if self.k_sample == 0 {
            return Err(SageError::InvalidParams("k_sample must be at least 1".into()));
        }
        let mut d = self.embeddings.cols();
        for (l, w) in self.layers.iter().enumerate() {
            if w.cols() != d {
                return Err(SageError::InvalidParams(format!(
                    "layer {l} expects input width {}, previous width is {d}",
                    w.cols()
                )));
            }
            d = w.rows();
        }
        Ok(())
    }

    /// Uniform embeddings with unit expected row norm and He-uniform layers.
    pub fn init(
        num_nodes: usize,
        dim: usize,
        k_layers: usize,
        k_sample: usize,
        direction: Direction,
        rng: &mut impl Rng,
    ) -> Self {
        let emb_bound = 3f64.sqrt() / (dim.max(1) as f64).sqrt();
        let embeddings = Matrix::uniform(num_nodes, dim, emb_bound, rng);
        let w_bound = (6.0 / dim.max(1) as f64).sqrt();
        let layers = (0..k_layers)
            .map(|_| Matrix::uniform(dim, dim, w_bound, rng))
            .collect();
        Self {
            embeddings,
            layers,
            k_sample,
            direction,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(self.embeddings.cols(), Matrix::rows)
    }
}

fn neighbor_list(kg: &KnowledgeGraph, node: NodeId, direction: Direction) -> Vec<NodeId> {
    match direction {
        Direction::Both => kg.undirected_slice(node).to_vec(),
        d => kg.neighbor_ids(node, d),
    }
}

/// Uniform sample without replacement of `min(k_sample, |N(v)|)` distinct
/// neighbors, returned in ascending id order.
pub fn sample_neighborhood(
    kg: &KnowledgeGraph,
    node: NodeId,
    k_sample: usize,
    direction: Direction,
    seed: u64,
) -> Result<Vec<NodeId>, KgError> {
    if !kg.has_node(node) {
        return Err(KgError::UnknownNode(node));
    }
    let all = neighbor_list(kg, node, direction);
    if all.len() <= k_sample {
        return Ok(all);
    }
    let mut rng = seed::rng(seed);
    let mut picked: Vec<NodeId> = index::sample(&mut rng, all.len(), k_sample)
        .into_iter()
        .map(|i| all[i])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

fn layer_seed(seed: u64, layer: usize, node: NodeId) -> u64 {
    seed::derive(seed, &[layer as u64, u64::from(node.0)])
}

const ABSENT: u32 = u32::MAX;

/// Per-layer computation sets. `sets[L]` are the requested nodes and
/// `sets[l - 1]` adds the layer-`l` samples of `sets[l]`.
struct Plan {
    sets: Vec<Vec<NodeId>>,
    /// `contributors[l - 1][i]` are the positions in `sets[l - 1]` of the
    /// contributors to `sets[l][i]`, self first.
    contributors: Vec<Vec<Vec<u32>>>,
    /// Position of a node in `sets[l]`, or `ABSENT`.
    pos: Vec<Vec<u32>>,
}

impl Plan {
    fn build(
        params: &EncoderParams,
        kg: &KnowledgeGraph,
        targets: &[NodeId],
        seed: u64,
    ) -> Result<Self, SageError> {
        let n = kg.num_nodes();
        let k_layers = params.num_layers();
        let mut sets = vec![Vec::new(); k_layers + 1];
        let mut samples: Vec<Vec<Vec<NodeId>>> = vec![Vec::new(); k_layers];
        sets[k_layers] = targets.to_vec();
        for l in (1..=k_layers).rev() {
            let mut below: Vec<NodeId> = sets[l].clone();
            for &v in &sets[l] {
                let s = sample_neighborhood(kg, v, params.k_sample, params.direction, layer_seed(seed, l, v))?;
                below.extend_from_slice(&s);
                samples[l - 1].push(s);
            }
            below.sort_unstable();
            below.dedup();
            sets[l - 1] = below;
        }
        let pos: Vec<Vec<u32>> = sets
            .iter()
            .map(|set| {
                let mut p = vec![ABSENT; n];
                for (i, v) in set.iter().enumerate() {
                    p[v.index()] = i as u32;
                }
                p
            })
            .collect();
        let contributors = (1..=k_layers)
            .map(|l| {
                sets[l]
                    .iter()
                    .zip(&samples[l - 1])
                    .map(|(v, s)| {
                        std::iter::once(v)
                            .chain(s)
                            .map(|u| pos[l - 1][u.index()])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            sets,
            contributors,
            pos,
        })
    }
}

struct Forward {
    plan: Plan,
    /// `h[l]` has one row per node of `sets[l]`.
    h: Vec<Matrix>,
    /// Mean inputs and pre-activations of layers `1..=L`, indexed `l - 1`.
    agg: Vec<Matrix>,
    pre: Vec<Matrix>,
}

fn sorted_unique(nodes: impl IntoIterator<Item = NodeId>) -> Vec<NodeId> {
    let mut v: Vec<NodeId> = nodes.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn check_graph(params: &EncoderParams, kg: &KnowledgeGraph, nodes: &[NodeId]) -> Result<(), SageError> {
    params.validate()?;
    if params.embeddings.rows() != kg.num_nodes() {
        return Err(NnError::DimensionMismatch {
            context: "embedding rows vs graph nodes",
            expected: kg.num_nodes(),
            got: params.embeddings.rows(),
        }
        .into());
    }
    if let Some(&bad) = nodes.iter().find(|v| !kg.has_node(**v)) {
        return Err(KgError::UnknownNode(bad).into());
    }
    Ok(())
}

fn forward(
    params: &EncoderParams,
    kg: &KnowledgeGraph,
    targets: &[NodeId],
    seed: u64,
) -> Result<Forward, SageError> {
    check_graph(params, kg, targets)?;
    let plan = Plan::build(params, kg, targets, seed)?;
    let d0 = params.embeddings.cols();
    let mut h0 = Matrix::zeros(plan.sets[0].len(), d0);
    for (i, v) in plan.sets[0].iter().enumerate() {
        h0.row_mut(i).copy_from_slice(params.embeddings.row(v.index()));
    }
    let mut h = vec![h0];
    let mut agg = Vec::with_capacity(params.num_layers());
    let mut pre = Vec::with_capacity(params.num_layers());
    for (l, w) in params.layers.iter().enumerate() {
        let prev = &h[l];
        let rows = plan.sets[l + 1].len();
        let mut a = Matrix::zeros(rows, w.cols());
        let mut z = Matrix::zeros(rows, w.rows());
        let mut out = Matrix::zeros(rows, w.rows());
        for (i, contrib) in plan.contributors[l].iter().enumerate() {
            let row = a.row_mut(i);
            for &c in contrib {
                for (r, x) in row.iter_mut().zip(prev.row(c as usize)) {
                    *r += x;
                }
            }
            let m = contrib.len() as f64;
            row.iter_mut().for_each(|r| *r /= m);
            let zi = w.matvec(a.row(i))?;
            for (o, &zv) in out.row_mut(i).iter_mut().zip(&zi) {
                *o = zv.max(0.0);
            }
            z.row_mut(i).copy_from_slice(&zi);
        }
        agg.push(a);
        pre.push(z);
        h.push(out);
    }
    Ok(Forward { plan, h, agg, pre })
}

impl Forward {
    fn output_row(&self, node: NodeId) -> &[f64] {
        let last = self.h.len() - 1;
        let i = self.plan.pos[last][node.index()];
        self.h[last].row(i as usize)
    }
}

/// Final-layer representations of `nodes`, one row per entry (duplicates
/// allowed).
pub fn encode(
    params: &EncoderParams,
    kg: &KnowledgeGraph,
    nodes: &[NodeId],
    seed: u64,
) -> Result<Matrix, SageError> {
    let targets = sorted_unique(nodes.iter().copied());
    let fwd = forward(params, kg, &targets, seed)?;
    let mut out = Matrix::zeros(nodes.len(), params.output_dim());
    for (i, &v) in nodes.iter().enumerate() {
        out.row_mut(i).copy_from_slice(fwd.output_row(v));
    }
    Ok(out)
}

/// `σ(f(h_i) · f(h_j))`.
pub fn score_links(h_i: &[f64], h_j: &[f64], head: &HeadModule) -> Result<f64, NnError> {
    if h_i.len() != h_j.len() {
        return Err(NnError::DimensionMismatch {
            context: "scored representations",
            expected: h_i.len(),
            got: h_j.len(),
        });
    }
    let fi = head.forward(h_i)?;
    let fj = head.forward(h_j)?;
    Ok(sigmoid(fi.iter().zip(&fj).map(|(a, b)| a * b).sum()))
}

/// Encoder and head of one client.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderParams,
    pub head: HeadModule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub embeddings: Matrix,
    pub layers: Vec<Matrix>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub encoder: EncoderGrads,
    pub head: HeadGrads,
}

impl ModelGrads {
    /// Flat views in [`ModelParams::tensor_names`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.encoder.embeddings.data()];
        out.extend(self.encoder.layers.iter().map(Matrix::data));
        out.extend(self.head.tensors());
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

impl ModelParams {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        num_nodes: usize,
        dim: usize,
        k_layers: usize,
        k_sample: usize,
        direction: Direction,
        final_activation: Activation,
        encoder_rng: &mut impl Rng,
        head_rng: &mut impl Rng,
    ) -> Self {
        Self {
            encoder: EncoderParams::init(num_nodes, dim, k_layers, k_sample, direction, encoder_rng),
            head: HeadModule::init(dim, [dim; 3], final_activation, head_rng),
        }
    }

    /// `emb`, `sage.{l}.W`, then `head.{l}.W` / `head.{l}.b` per head layer.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["emb".to_string()];
        names.extend((0..self.encoder.num_layers()).map(|l| format!("sage.{l}.W")));
        for l in 0..3 {
            names.push(format!("head.{l}.W"));
            names.push(format!("head.{l}.b"));
        }
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![self.encoder.embeddings.data()];
        out.extend(self.encoder.layers.iter().map(Matrix::data));
        out.extend(self.head.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.encoder.embeddings.data_mut()];
        out.extend(self.encoder.layers.iter_mut().map(Matrix::data_mut));
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn tensor_sizes(&self) -> Vec<usize> {
        self.tensors().iter().map(|t| t.len()).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    /// Overwrites all parameters from a vector in [`Self::flatten`] order.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<(), NnError> {
        let total: usize = self.tensor_sizes().iter().sum();
        if values.len() != total {
            return Err(NnError::DimensionMismatch {
                context: "flat parameter vector",
                expected: total,
                got: values.len(),
            });
        }
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn to_named_tensors(&self) -> Vec<NamedTensor> {
        let mut out = vec![NamedTensor::new("emb", self.encoder.embeddings.clone())];
        for (l, w) in self.encoder.layers.iter().enumerate() {
            out.push(NamedTensor::new(format!("sage.{l}.W"), w.clone()));
        }
        for (l, layer) in self.head.layers().iter().enumerate() {
            out.push(NamedTensor::new(format!("head.{l}.W"), layer.weight.clone()));
            let bias = Matrix::new(1, layer.bias.len(), layer.bias.clone()).expect("bias row");
            out.push(NamedTensor::new(format!("head.{l}.b"), bias));
        }
        out
    }

    pub fn from_named_tensors(
        tensors: &[NamedTensor],
        k_sample: usize,
        direction: Direction,
        final_activation: Activation,
    ) -> Result<Self, SageError> {
        let find = |name: &str| {
            tensors
                .iter()
                .find(|t| t.name == name)
                .map(|t| t.value.clone())
                .ok_or_else(|| NnError::Checkpoint(format!("missing tensor {name}")))
        };
        let embeddings = find("emb")?;
        let mut layers = Vec::new();
        while let Some(t) = tensors.iter().find(|t| t.name == format!("sage.{}.W", layers.len())) {
            layers.push(t.value.clone());
        }
        let mut head_layers = Vec::with_capacity(3);
        for l in 0..3 {
            let weight = find(&format!("head.{l}.W"))?;
            let bias = find(&format!("head.{l}.b"))?;
            if bias.rows() != 1 {
                return Err(NnError::Checkpoint(format!("head.{l}.b must have one row")).into());
            }
            head_layers.push(DenseLayer::new(weight, bias.data().to_vec())?);
        }
        let layers_arr: [DenseLayer; 3] = head_layers.try_into().expect("three head layers");
        Ok(Self {
            encoder: EncoderParams::new(embeddings, layers, k_sample, direction)?,
            head: HeadModule::new(layers_arr, final_activation)?,
        })
    }
}

struct Scored {
    fwd: Forward,
    targets: Vec<NodeId>,
    traces: Vec<HeadTrace>,
}

impl Scored {
    fn compute(
        encoder: &EncoderParams,
        head: &HeadModule,
        kg: &KnowledgeGraph,
        triples: impl Iterator<Item = Triple>,
        seed: u64,
    ) -> Result<Self, SageError> {
        let targets = sorted_unique(triples.flat_map(|t| [t.head, t.tail]));
        let fwd = forward(encoder, kg, &targets, seed)?;
        let last = fwd.h.len() - 1;
        let traces = (0..targets.len())
            .map(|i| head.forward_trace(fwd.h[last].row(i)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { fwd, targets, traces })
    }

    fn target_index(&self, node: NodeId) -> usize {
        let last = self.fwd.h.len() - 1;
        self.fwd.plan.pos[last][node.index()] as usize
    }

    fn logit(&self, t: &Triple) -> f64 {
        let a = &self.traces[self.target_index(t.head)].output;
        let b = &self.traces[self.target_index(t.tail)].output;
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

/// Link probabilities for `triples`.
pub fn score_triples(
    params: &ModelParams,
    kg: &KnowledgeGraph,
    triples: &[Triple],
    seed: u64,
) -> Result<Vec<f64>, SageError> {
    score_triples_with(&params.encoder, &params.head, kg, triples, seed)
}

/// Link probabilities for `triples` using `head` on top of `encoder`.
pub fn score_triples_with(
    encoder: &EncoderParams,
    head: &HeadModule,
    kg: &KnowledgeGraph,
    triples: &[Triple],
    seed: u64,
) -> Result<Vec<f64>, SageError> {
    if triples.is_empty() {
        return Ok(Vec::new());
    }
    let scored = Scored::compute(encoder, head, kg, triples.iter().copied(), seed)?;
    Ok(triples.iter().map(|t| sigmoid(scored.logit(t))).collect())
}

/// Mean BCE over `batch` (label 1 = edge) and its gradient with respect to
/// every parameter.
///
/// The logit gradient is `(p - y) / B`, the derivative of the unclamped
/// loss; it agrees with the clamped loss wherever the clamp is inactive.
pub fn loss_and_grads(
    params: &ModelParams,
    kg: &KnowledgeGraph,
    batch: &[(Triple, f64)],
    seed: u64,
) -> Result<(f64, ModelGrads), SageError> {
    if batch.is_empty() {
        return Err(SageError::EmptyBatch);
    }
    let scored = Scored::compute(&params.encoder, &params.head, kg, batch.iter().map(|(t, _)| *t), seed)?;
    let dim = params.head.output_dim();
    let b = batch.len() as f64;

    let mut preds = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let mut grad_f = vec![vec![0.0; dim]; scored.targets.len()];
    for (t, y) in batch {
        let p = sigmoid(scored.logit(t));
        preds.push(p);
        labels.push(*y);
        let g = (p - y) / b;
        let (hi, ti) = (scored.target_index(t.head), scored.target_index(t.tail));
        for k in 0..dim {
            let fh = scored.traces[hi].output[k];
            let ft = scored.traces[ti].output[k];
            grad_f[hi][k] += g * ft;
            grad_f[ti][k] += g * fh;
        }
    }
    let loss = bce_loss(&preds, &labels)?;

    let mut head_grads = HeadGrads::zeros_like(&params.head);
    let fwd = &scored.fwd;
    let k_layers = params.encoder.num_layers();
    let mut dh = Matrix::zeros(scored.targets.len(), params.encoder.output_dim());
    for (i, trace) in scored.traces.iter().enumerate() {
        let dx = params.head.backward_trace(trace, &grad_f[i], &mut head_grads)?;
        dh.row_mut(i).copy_from_slice(&dx);
    }

    let mut layer_grads: Vec<Matrix> = params
        .encoder
        .layers
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    for l in (0..k_layers).rev() {
        let w = &params.encoder.layers[l];
        let mut below = Matrix::zeros(fwd.plan.sets[l].len(), w.cols());
        for (i, contrib) in fwd.plan.contributors[l].iter().enumerate() {
            let dz: Vec<f64> = dh
                .row(i)
                .iter()
                .zip(fwd.pre[l].row(i))
                .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
                .collect();
            if dz.iter().all(|&v| v == 0.0) {
                continue;
            }
            layer_grads[l].add_outer(&dz, fwd.agg[l].row(i));
            let dm = w.matvec_t(&dz)?;
            let share = 1.0 / contrib.len() as f64;
            for &c in contrib {
                for (r, g) in below.row_mut(c as usize).iter_mut().zip(&dm) {
                    *r += g * share;
                }
            }
        }
        dh = below;
    }

    let mut emb_grad = Matrix::zeros(params.encoder.embeddings.rows(), params.encoder.embeddings.cols());
    for (i, v) in fwd.plan.sets[0].iter().enumerate() {
        emb_grad.row_mut(v.index()).copy_from_slice(dh.row(i));
    }
    Ok((
        loss,
        ModelGrads {
            encoder: EncoderGrads {
                embeddings: emb_grad,
                layers: layer_grads,
            },
            head: head_grads,
        },
    ))
}
