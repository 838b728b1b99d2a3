use std::collections::BTreeMap;

use super::FedError;
use crate::eval::{evaluate_split, roc_auc, LinkScorer, RelationMetrics, ScoredSet};
use crate::kg::{Direction, EdgeSplit, KnowledgeGraph, RelationType, SplitPart, Triple};
use crate::nn::{Activation, AdamConfig, AdamState, HeadModule};
use crate::sage::{loss_and_grads, score_triples_with, ModelParams};
use crate::seed;

/// Model shape and optimizer settings shared by all clients of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub dim: usize,
    pub k_layers: usize,
    pub k_sample: usize,
    pub direction: Direction,
    pub learning_rate: f64,
    pub final_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            k_layers: 2,
            k_sample: 10,
            direction: Direction::Both,
            learning_rate: 0.01,
            final_activation: Activation::Relu,
        }
    }
}

const EPOCH: u64 = 0x6570_6f63;
const EVAL: u64 = 0x6576_616c;

/// One country: its graph, split, model and optimizer. Nothing here is
/// visible to other clients except head snapshots and scalar scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    id: String,
    kg: KnowledgeGraph,
    /// Training edges only; all message passing runs over this graph.
    message_graph: KnowledgeGraph,
    split: EdgeSplit,
    params: ModelParams,
    adam: AdamState,
    seed: u64,
    epochs_trained: u64,
    train_batch: Vec<(Triple, f64)>,
}

impl ClientState {
    /// Fresh client. Encoder weights and neighbor samples come from `seed`;
    /// the head is initialized from `head_seed` so clients of one run can
    /// start from a common head.
    pub fn new(
        id: impl Into<String>,
        kg: KnowledgeGraph,
        split: EdgeSplit,
        config: &ModelConfig,
        seed: u64,
        head_seed: u64,
    ) -> Self {
        let params = ModelParams::init(
            kg.num_nodes(),
            config.dim,
            config.k_layers,
            config.k_sample,
            config.direction,
            config.final_activation,
            &mut seed::rng(seed::derive(seed, &[seed::tag("encoder")])),
            &mut seed::rng(head_seed),
        );
        Self::from_params(id, kg, split, params, config.learning_rate, seed)
    }

    pub fn from_params(
        id: impl Into<String>,
        kg: KnowledgeGraph,
        split: EdgeSplit,
        params: ModelParams,
        learning_rate: f64,
        seed: u64,
    ) -> Self {
        let message_graph = kg.with_edges(split.all_positives(SplitPart::Train));
        let train_batch = split.labelled(SplitPart::Train);
        let adam = AdamState::new(AdamConfig::with_lr(learning_rate), &params.tensor_sizes());
        Self {
            id: id.into(),
            kg,
            message_graph,
            split,
            params,
            adam,
            seed,
            epochs_trained: 0,
            train_batch,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn graph(&self) -> &KnowledgeGraph {
        &self.kg
    }

    pub fn split(&self) -> &EdgeSplit {
        &self.split
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn adam_steps(&self) -> u64 {
        self.adam.step()
    }

    pub fn epochs_trained(&self) -> u64 {
        self.epochs_trained
    }

    pub fn relations(&self) -> Vec<RelationType> {
        self.split.relations()
    }

    pub fn head_snapshot(&self) -> HeadModule {
        self.params.head.clone()
    }

    /// Replaces the head; optimizer moments are kept.
    pub fn install_head(&mut self, head: HeadModule) -> Result<(), FedError> {
        if !head.same_shape(&self.params.head) {
            return Err(FedError::ShapeMismatch(format!(
                "client {} cannot install a head of a different shape",
                self.id
            )));
        }
        self.params.head = head;
        Ok(())
    }

    fn epoch_seed(&self) -> u64 {
        seed::derive(self.seed, &[EPOCH, self.epochs_trained])
    }

    fn eval_seed(&self) -> u64 {
        seed::derive(self.seed, &[EVAL])
    }

    fn train_epochs(&mut self, epochs: usize, mask: Option<&[bool]>) -> Result<Vec<f64>, FedError> {
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            if self.train_batch.is_empty() {
                return Err(FedError::EmptyTrainingSet(self.id.clone()));
            }
            let (loss, grads) =
                loss_and_grads(&self.params, &self.message_graph, &self.train_batch, self.epoch_seed())?;
            let grad_views = grads.tensors();
            let mut param_views = self.params.tensors_mut();
            match mask {
                Some(m) => self.adam.update_masked(&mut param_views, &grad_views, m)?,
                None => self.adam.update(&mut param_views, &grad_views)?,
            }
            self.epochs_trained += 1;
            losses.push(loss);
        }
        Ok(losses)
    }

    /// Full-batch epochs over the training positives and their negatives.
    /// Returns the loss of each epoch, measured before its update.
    pub fn local_train(&mut self, epochs: usize) -> Result<Vec<f64>, FedError> {
        self.train_epochs(epochs, None)
    }

    /// Trains only the weight and bias of the last head layer, starting
    /// from fresh optimizer moments for those two tensors.
    pub fn fine_tune_last_layer(&mut self, epochs: usize) -> Result<Vec<f64>, FedError> {
        if epochs == 0 {
            return Ok(Vec::new());
        }
        let n = self.adam.num_tensors();
        let mut mask = vec![false; n];
        for i in [n - 2, n - 1] {
            mask[i] = true;
            self.adam.reset_tensor(i);
        }
        self.train_epochs(epochs, Some(&mask))
    }

    fn scores_with(&self, head: &HeadModule, triples: &[Triple]) -> Result<Vec<f64>, FedError> {
        Ok(score_triples_with(
            &self.params.encoder,
            head,
            &self.message_graph,
            triples,
            self.eval_seed(),
        )?)
    }

    /// ROC-AUC over all validation pairs, using this client's encoder with
    /// `head`.
    pub fn validation_auc_with(&self, head: &HeadModule) -> Result<f64, FedError> {
        if !head.same_shape(&self.params.head) {
            return Err(FedError::ShapeMismatch(format!(
                "client {} cannot evaluate a head of a different shape",
                self.id
            )));
        }
        let pos: Vec<Triple> = self.split.all_positives(SplitPart::Valid).copied().collect();
        let neg: Vec<Triple> = self.split.all_negatives(SplitPart::Valid).copied().collect();
        let set = ScoredSet::from_groups(&self.scores_with(head, &pos)?, &self.scores_with(head, &neg)?)?;
        Ok(roc_auc(&set)?)
    }

    pub fn validation_auc(&self) -> Result<f64, FedError> {
        self.validation_auc_with(&self.params.head)
    }

    /// Per-relation ROC-AUC and AP on one split part.
    pub fn evaluate(&self, part: SplitPart) -> Result<BTreeMap<RelationType, RelationMetrics>, FedError> {
        Ok(evaluate_split(self, &self.split, part)?)
    }
}

impl LinkScorer for ClientState {
    fn score_triples(&self, triples: &[Triple]) -> Vec<f64> {
        self.scores_with(&self.params.head, triples)
            .expect("client triples belong to its own graph")
    }
}
