//! Client loading, per-run seeds and the variant x repetition sweep.
//!
//! Seeds, all derived from the master seed:
//! - graph of client `c`: `derive(master, [GRAPH, c])`
//! - split of client `c`: `derive(master, [SPLIT, c])`
//! - client `c` in run `r` of variant `v`: `derive(master, [tag(v), r, c])`
//! - shared head initialization of run `r`: `derive(master, [HEAD, r])`
//!
//! Graphs and splits are therefore the same for every run and variant, and
//! any single run can be reproduced from the master seed alone.

use std::sync::atomic::{AtomicBool, Ordering};

use rayon::prelude::*;

use fgs_core::eval::RunRecord;
use fgs_core::fed::{run_federation, ClientState, GroupingResult, ModelConfig, RoundReport, Variant};
use fgs_core::kg::{read_graph_file, split_edges, EdgeSplit, SplitPart, SplitRatios};
use fgs_core::seed::{derive, tag};
use fgs_core::synth::{generate_country_graph, SynthConfig, SynthMode};
use fgs_core::KnowledgeGraph;

use crate::config::{ClientSource, ClientSpec, RunConfig};
use crate::CliError;

const GRAPH: u64 = 0x6772_6170_68;
const SPLIT: u64 = 0x7370_6c69_74;
const HEAD: u64 = 0x6865_6164;

pub fn graph_seed(master: u64, client: usize) -> u64 {
    derive(master, &[GRAPH, client as u64])
}

pub fn split_seed(master: u64, client: usize) -> u64 {
    derive(master, &[SPLIT, client as u64])
}

pub fn client_seed(master: u64, variant: Variant, run: usize, client: usize) -> u64 {
    derive(master, &[tag(variant.as_str()), run as u64, client as u64])
}

pub fn head_seed(master: u64, run: usize) -> u64 {
    derive(master, &[HEAD, run as u64])
}

/// Graph synthesis settings shared by every synthesized client.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSettings {
    pub mode: SynthMode,
    pub n_blocks: usize,
    pub mass: f64,
}

impl SynthSettings {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            mode: cfg.synth_mode,
            n_blocks: cfg.n_blocks,
            mass: cfg.intra_block_mass,
        }
    }
}

/// Builds (or reads) the graph of client number `index`.
pub fn client_graph(
    spec: &ClientSpec,
    index: usize,
    synth: SynthSettings,
    master: u64,
) -> Result<KnowledgeGraph, CliError> {
    let context = |e: &dyn std::fmt::Display| CliError::Runtime(format!("client {}: {e}", spec.name));
    match &spec.source {
        ClientSource::GraphFile(path) => read_graph_file(path).map_err(|e| context(&e)),
        ClientSource::Profile(_) => {
            let profile = spec.profile().expect("profile source");
            let seed = graph_seed(master, index);
            let config = match synth.mode {
                SynthMode::UniformRandom => SynthConfig::uniform(profile, seed),
                SynthMode::PlantedBlocks => SynthConfig::planted(profile, synth.n_blocks, synth.mass, seed),
            };
            generate_country_graph(&config).map_err(|e| context(&e))
        }
    }
}

/// One client's private data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub name: String,
    pub graph: KnowledgeGraph,
    pub split: EdgeSplit,
}

impl ClientData {
    pub fn new(
        name: impl Into<String>,
        graph: KnowledgeGraph,
        ratios: SplitRatios,
        seed: u64,
    ) -> Result<Self, CliError> {
        let name = name.into();
        let split = split_edges(&graph, ratios, seed)
            .map_err(|e| CliError::Runtime(format!("client {name}: {e}")))?;
        Ok(Self { name, graph, split })
    }
}

pub fn load_clients(cfg: &RunConfig) -> Result<Vec<ClientData>, CliError> {
    let synth = SynthSettings::from_config(cfg);
    cfg.clients
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let graph = client_graph(spec, i, synth, cfg.seed)?;
            ClientData::new(spec.name.clone(), graph, cfg.split, split_seed(cfg.seed, i))
        })
        .collect()
}

/// Everything a sweep needs besides the variant and run index.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub clients: Vec<ClientData>,
    pub model: ModelConfig,
    pub rounds: usize,
    pub local_epochs: usize,
    pub finetune_epochs: usize,
    pub delta: f64,
    pub master_seed: u64,
}

/// Result of one (variant, run) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub variant: Variant,
    pub run: usize,
    pub records: Vec<RunRecord>,
    pub reports: Vec<RoundReport>,
    pub grouping: Option<GroupingResult>,
}

impl Experiment {
    pub fn from_config(cfg: &RunConfig, clients: Vec<ClientData>) -> Self {
        let fed = cfg.federation(Variant::LocalM);
        Self {
            clients,
            model: cfg.model,
            rounds: fed.rounds,
            local_epochs: fed.local_epochs,
            finetune_epochs: fed.finetune_epochs,
            delta: fed.delta,
            master_seed: cfg.seed,
        }
    }

    /// Fresh client states for one run.
    pub fn client_states(&self, variant: Variant, run: usize) -> Vec<ClientState> {
        let head = head_seed(self.master_seed, run);
        self.clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                ClientState::new(
                    c.name.clone(),
                    c.graph.clone(),
                    c.split.clone(),
                    &self.model,
                    client_seed(self.master_seed, variant, run, i),
                    head,
                )
            })
            .collect()
    }

    /// Trains one regime and returns the trained clients alongside the
    /// test metrics. `parallel` trains the clients of a round concurrently.
    pub fn train(
        &self,
        variant: Variant,
        run: usize,
        parallel: bool,
    ) -> Result<(Vec<ClientState>, RunOutput), CliError> {
        let mut clients = self.client_states(variant, run);
        let fed = fgs_core::fed::FederationConfig {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            variant,
            delta: self.delta,
            finetune_epochs: self.finetune_epochs,
            parallel,
        };
        let outcome = run_federation(&mut clients, &fed)
            .map_err(|e| CliError::Runtime(format!("{variant} run {run}: {e}")))?;
        let mut records = Vec::new();
        for c in &clients {
            let metrics = c
                .evaluate(SplitPart::Test)
                .map_err(|e| CliError::Runtime(format!("{variant} run {run}, client {}: {e}", c.id())))?;
            for (relation, m) in metrics {
                records.push(RunRecord {
                    country: c.id().to_string(),
                    relation,
                    model: variant.as_str().to_string(),
                    run,
                    roc_auc: m.roc_auc,
                    average_precision: m.average_precision,
                });
            }
        }
        let output = RunOutput {
            variant,
            run,
            records,
            reports: outcome.reports,
            grouping: outcome.grouping,
        };
        Ok((clients, output))
    }

    pub fn run(&self, variant: Variant, run: usize) -> Result<RunOutput, CliError> {
        Ok(self.train(variant, run, false)?.1)
    }

    /// All `variants x repetitions` runs, ordered by run index then variant.
    ///
    /// Runs are independent and may execute concurrently; results do not
    /// depend on scheduling. Once `stop` is set no new run starts, and the
    /// completed runs are returned with `complete = false`.
    pub fn sweep(
        &self,
        variants: &[Variant],
        repetitions: usize,
        parallel: bool,
        stop: &AtomicBool,
    ) -> Result<Sweep, CliError> {
        let jobs: Vec<(usize, Variant)> = (0..repetitions)
            .flat_map(|r| variants.iter().map(move |&v| (r, v)))
            .collect();
        let job = |&(run, variant): &(usize, Variant)| -> Result<Option<RunOutput>, CliError> {
            if stop.load(Ordering::SeqCst) {
                return Ok(None);
            }
            self.run(variant, run).map(Some)
        };
        let results: Vec<Option<RunOutput>> = if parallel {
            jobs.par_iter().map(job).collect::<Result<_, _>>()?
        } else {
            jobs.iter().map(job).collect::<Result<_, _>>()?
        };
        let complete = results.iter().all(Option::is_some) && !stop.load(Ordering::SeqCst);
        Ok(Sweep {
            runs: results.into_iter().flatten().collect(),
            complete,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub runs: Vec<RunOutput>,
    pub complete: bool,
}

impl Sweep {
    pub fn records(&self) -> Vec<RunRecord> {
        self.runs.iter().flat_map(|r| r.records.iter().cloned()).collect()
    }
}
