//! The five commands. Each writes its files under the configured output
//! directory and returns a small summary for the terminal.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};

use fgs_core::eval::{aggregate_runs, ExperimentReport, RelationMetrics};
use fgs_core::fed::{ClientState, RoundReport, Variant};
use fgs_core::kg::{read_graph_file, relation_network_stats, write_graph_file, KgError, NetworkStats, SplitPart};
use fgs_core::nn::{read_checkpoint, write_checkpoint};
use fgs_core::sage::ModelParams;
use fgs_core::{NodeType, RelationType};

use crate::config::{ClientSource, RunConfig};
use crate::experiment::{
    client_graph, client_seed, graph_seed, head_seed, load_clients, split_seed, ClientData, Experiment,
    RunOutput, SynthSettings,
};
use crate::CliError;

pub const PARTIAL_SUFFIX: &str = ".partial";

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| io_err(path, e))
}

/// Writes `contents` to `path`, or to `path.partial` for an incomplete
/// result. A stale file of the other kind is removed.
fn write_output(path: &Path, contents: &str, partial: bool) -> Result<PathBuf, CliError> {
    let partial_path = PathBuf::from(format!("{}{PARTIAL_SUFFIX}", path.display()));
    let (target, stale) = if partial {
        (partial_path, path.to_path_buf())
    } else {
        (path.to_path_buf(), partial_path)
    };
    if let Some(parent) = target.parent() {
        create_dir(parent)?;
    }
    fs::write(&target, contents).map_err(|e| io_err(&target, e))?;
    if stale.exists() {
        fs::remove_file(&stale).map_err(|e| io_err(&stale, e))?;
    }
    Ok(target)
}

fn interrupted(stop: &AtomicBool) -> Result<(), CliError> {
    if stop.load(Ordering::SeqCst) {
        Err(CliError::Interrupted)
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedClient {
    pub name: String,
    pub path: PathBuf,
    pub seed: u64,
    pub nodes: [usize; 4],
    pub edges: [usize; 4],
}

impl GeneratedClient {
    pub fn total_edges(&self) -> usize {
        self.edges.iter().sum()
    }
}

pub fn graph_path(out: &Path, client: &str) -> PathBuf {
    out.join("graphs").join(format!("{client}.tsv"))
}

/// Writes `graphs/NAME.tsv` per client, the generated profiles and a
/// manifest with the seeds used.
pub fn cmd_generate(cfg: &RunConfig, stop: &AtomicBool) -> Result<Vec<GeneratedClient>, CliError> {
    let synth = SynthSettings::from_config(cfg);
    let mut generated = Vec::new();
    let mut profiles = String::new();
    for (i, spec) in cfg.clients.iter().enumerate() {
        interrupted(stop)?;
        let graph = client_graph(spec, i, synth, cfg.seed)?;
        let path = graph_path(&cfg.out, &spec.name);
        create_dir(path.parent().unwrap())?;
        write_graph_file(&graph, &path).map_err(|e| io_err(&path, e))?;
        if let Some(p) = spec.profile() {
            profiles.push_str(&p.to_text());
            profiles.push('\n');
        }
        log::info!("{}: {} nodes, {} edges", spec.name, graph.num_nodes(), graph.num_edges());
        generated.push(GeneratedClient {
            name: spec.name.clone(),
            path,
            seed: graph_seed(cfg.seed, i),
            nodes: NodeType::ALL.map(|t| graph.nodes_of_type(t).len()),
            edges: RelationType::ALL.map(|r| graph.relation_count(r)),
        });
    }

    let mut manifest = format!(
        "master_seed={}\nsynth.mode={:?}\nsynth.n_blocks={}\nsynth.mass={}\n",
        cfg.seed, cfg.synth_mode, cfg.n_blocks, cfg.intra_block_mass
    );
    for g in &generated {
        let source = match &cfg.clients.iter().find(|c| c.name == g.name).unwrap().source {
            ClientSource::Profile(_) => "synthesized".to_string(),
            ClientSource::GraphFile(p) => p.display().to_string(),
        };
        writeln!(
            manifest,
            "client.{}.source={source}\nclient.{}.graph_seed={}\nclient.{}.nodes={}\nclient.{}.edges={}",
            g.name,
            g.name,
            g.seed,
            g.name,
            g.nodes.iter().sum::<usize>(),
            g.name,
            g.total_edges()
        )
        .unwrap();
    }
    write_output(&cfg.out.join("profiles.txt"), &profiles, false)?;
    write_output(&cfg.out.join("manifest.txt"), &manifest, false)?;
    Ok(generated)
}

/// Profile echo printed by `fgs generate`.
pub fn generation_table(clients: &[GeneratedClient]) -> String {
    let mut s = String::from("country,company,customer,product,certificate,supplies_to,buys,made_by,has_cert,total_edges\n");
    for c in clients {
        let cols: Vec<String> = c.nodes.iter().chain(&c.edges).map(usize::to_string).collect();
        writeln!(s, "{},{},{}", c.name, cols.join(","), c.total_edges()).unwrap();
    }
    s
}

/// `variant,run,round,stage,client,train_loss,relation,val_auc`.
pub fn trace_csv(runs: &[&RunOutput]) -> String {
    let mut s = String::from("variant,run,round,stage,client,train_loss,relation,val_auc\n");
    for out in runs {
        for r in &out.reports {
            write_trace_rows(&mut s, out.run, r);
        }
    }
    s
}

fn write_trace_rows(s: &mut String, run: usize, r: &RoundReport) {
    for (relation, auc) in &r.val_auc {
        writeln!(
            s,
            "{},{run},{},{},{},{},{relation},{auc}",
            r.variant,
            r.round,
            r.stage.as_str(),
            r.client,
            r.train_loss
        )
        .unwrap();
    }
}

fn groupings_json(runs: &[RunOutput], clients: &[ClientData]) -> String {
    let names: Vec<&str> = clients.iter().map(|c| c.name.as_str()).collect();
    let entries: Vec<serde_json::Value> = runs
        .iter()
        .filter_map(|r| {
            r.grouping.as_ref().map(|g| {
                let groups: Vec<Vec<&str>> = g
                    .groups
                    .iter()
                    .map(|members| members.iter().map(|&i| names[i]).collect())
                    .collect();
                serde_json::json!({
                    "variant": r.variant,
                    "run": r.run,
                    "clients": names,
                    "groups": groups,
                    "cross_eval": g.cross_eval,
                })
            })
        })
        .collect();
    serde_json::to_string_pretty(&entries).unwrap() + "\n"
}

fn run_manifest(cfg: &RunConfig, variants: &[Variant]) -> String {
    let mut s = format!(
        "master_seed={}\nrepetitions={}\nvariants={}\nrounds={}\nlocal_epochs={}\nfinetune_epochs={}\ndelta={}\n\
         model.d={}\nmodel.k_layers={}\nmodel.k_sample={}\nmodel.lr={}\nmodel.direction={}\nmodel.final_activation={:?}\n",
        cfg.seed,
        cfg.repetitions,
        variants.iter().map(|v| v.as_str()).collect::<Vec<_>>().join(","),
        cfg.rounds,
        cfg.local_epochs,
        cfg.finetune_epochs.unwrap_or(cfg.local_epochs),
        cfg.delta,
        cfg.model.dim,
        cfg.model.k_layers,
        cfg.model.k_sample,
        cfg.model.learning_rate,
        cfg.model.direction.as_str(),
        cfg.model.final_activation,
    );
    for (i, c) in cfg.clients.iter().enumerate() {
        writeln!(
            s,
            "client.{}.graph_seed={}\nclient.{}.split_seed={}",
            c.name,
            graph_seed(cfg.seed, i),
            c.name,
            split_seed(cfg.seed, i)
        )
        .unwrap();
    }
    for run in 0..cfg.repetitions {
        writeln!(s, "run.{run}.head_seed={}", head_seed(cfg.seed, run)).unwrap();
        for &v in variants {
            for (i, c) in cfg.clients.iter().enumerate() {
                writeln!(s, "run.{run}.{v}.{}.seed={}", c.name, client_seed(cfg.seed, v, run, i)).unwrap();
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareSummary {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
    pub runs_completed: usize,
}

/// Runs every requested variant `repetitions` times and writes
/// `summary.csv`, `runs.csv`, `significance.json`, `groupings.json`,
/// `traces/run_NNN.csv` and `compare_manifest.txt`.
///
/// When `stop` is raised mid-sweep the completed runs are still written,
/// with a `.partial` suffix, and [`CliError::Interrupted`] is returned.
pub fn cmd_compare(cfg: &RunConfig, stop: &AtomicBool) -> Result<CompareSummary, CliError> {
    let clients = load_clients(cfg)?;
    interrupted(stop)?;
    let experiment = Experiment::from_config(cfg, clients);
    let sweep = experiment.sweep(&cfg.variants, cfg.repetitions, cfg.parallel, stop)?;
    let partial = !sweep.complete;
    if sweep.runs.is_empty() {
        return Err(CliError::Interrupted);
    }
    let report = aggregate_runs(&sweep.records(), cfg.stats_rows, cfg.alpha)
        .map_err(|e| CliError::Runtime(format!("aggregating runs: {e}")))?;

    let out = &cfg.out;
    let mut files = vec![
        write_output(&out.join("summary.csv"), &report.summary_csv(), partial)?,
        write_output(&out.join("runs.csv"), &report.runs_csv(), partial)?,
        write_output(
            &out.join("significance.json"),
            &(serde_json::to_string_pretty(&report.significance).unwrap() + "\n"),
            partial,
        )?,
        write_output(&out.join("groupings.json"), &groupings_json(&sweep.runs, &experiment.clients), partial)?,
        write_output(&out.join("compare_manifest.txt"), &run_manifest(cfg, &cfg.variants), partial)?,
    ];
    for run in 0..cfg.repetitions {
        let of_run: Vec<&RunOutput> = sweep.runs.iter().filter(|r| r.run == run).collect();
        if of_run.is_empty() {
            continue;
        }
        let done = of_run.len() == cfg.variants.len();
        let path = out.join("traces").join(format!("run_{run:03}.csv"));
        files.push(write_output(&path, &trace_csv(&of_run), partial || !done)?);
    }
    if partial {
        return Err(CliError::Interrupted);
    }
    Ok(CompareSummary {
        report,
        files,
        runs_completed: sweep.runs.len(),
    })
}

pub fn checkpoint_path(out: &Path, client: &str) -> PathBuf {
    out.join("checkpoints").join(format!("{client}.fgs"))
}

fn metrics_csv(rows: &[(String, RelationType, RelationMetrics)]) -> String {
    let mut s = String::from("country,relation,roc_auc,ap,positives,negatives\n");
    for (country, relation, m) in rows {
        writeln!(
            s,
            "{country},{relation},{},{},{},{}",
            m.roc_auc, m.average_precision, m.positives, m.negatives
        )
        .unwrap();
    }
    s
}

fn client_metrics(
    clients: &[ClientState],
    part: SplitPart,
) -> Result<Vec<(String, RelationType, RelationMetrics)>, CliError> {
    let mut rows = Vec::new();
    for c in clients {
        let metrics = c
            .evaluate(part)
            .map_err(|e| CliError::Runtime(format!("client {}: {e}", c.id())))?;
        rows.extend(metrics.into_iter().map(|(r, m)| (c.id().to_string(), r, m)));
    }
    Ok(rows)
}

/// Trains the first configured variant once (run 0) and writes one
/// checkpoint per client, the round trace and validation metrics.
pub fn cmd_train(cfg: &RunConfig, stop: &AtomicBool) -> Result<Vec<PathBuf>, CliError> {
    let variant = cfg.variants[0];
    let clients = load_clients(cfg)?;
    interrupted(stop)?;
    let experiment = Experiment::from_config(cfg, clients);
    let (states, output) = experiment.train(variant, 0, cfg.parallel)?;
    let mut files = Vec::new();
    for c in &states {
        let path = checkpoint_path(&cfg.out, c.id());
        create_dir(path.parent().unwrap())?;
        let file = File::create(&path).map_err(|e| io_err(&path, e))?;
        write_checkpoint(&c.params().to_named_tensors(), BufWriter::new(file)).map_err(|e| io_err(&path, e))?;
        files.push(path);
    }
    files.push(write_output(&cfg.out.join("traces").join("train.csv"), &trace_csv(&[&output]), false)?);
    files.push(write_output(
        &cfg.out.join("valid_metrics.csv"),
        &metrics_csv(&client_metrics(&states, SplitPart::Valid)?),
        false,
    )?);
    if output.grouping.is_some() {
        files.push(write_output(
            &cfg.out.join("groupings.json"),
            &groupings_json(std::slice::from_ref(&output), &experiment.clients),
            false,
        )?);
    }
    let single = RunConfig {
        repetitions: 1,
        ..cfg.clone()
    };
    files.push(write_output(&cfg.out.join("train_manifest.txt"), &run_manifest(&single, &[variant]), false)?);
    Ok(files)
}

/// Loads the checkpoints written by [`cmd_train`] for the same config and
/// writes per-relation test metrics to `test_metrics.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<(PathBuf, ExperimentMetrics), CliError> {
    let variant = cfg.variants[0];
    let clients = load_clients(cfg)?;
    let mut states = Vec::new();
    for (i, c) in clients.into_iter().enumerate() {
        let path = checkpoint_path(&cfg.out, &c.name);
        let file = File::open(&path).map_err(|e| io_err(&path, e))?;
        let tensors = read_checkpoint(BufReader::new(file)).map_err(|e| io_err(&path, e))?;
        let params =
            ModelParams::from_named_tensors(&tensors, cfg.model.k_sample, cfg.model.direction, cfg.model.final_activation)
                .map_err(|e| io_err(&path, e))?;
        if params.encoder.embeddings.rows() != c.graph.num_nodes() {
            return Err(io_err(&path, format!(
                "checkpoint has {} node embeddings but the graph has {} nodes",
                params.encoder.embeddings.rows(),
                c.graph.num_nodes()
            )));
        }
        let seed = client_seed(cfg.seed, variant, 0, i);
        states.push(ClientState::from_params(c.name, c.graph, c.split, params, cfg.model.learning_rate, seed));
    }
    let rows = client_metrics(&states, SplitPart::Test)?;
    let path = write_output(&cfg.out.join("test_metrics.csv"), &metrics_csv(&rows), false)?;
    Ok((path, rows))
}

pub type ExperimentMetrics = Vec<(String, RelationType, RelationMetrics)>;

#[derive(Debug, Clone, PartialEq)]
pub struct StatsRow {
    pub country: String,
    pub relation: RelationType,
    pub stats: NetworkStats,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    /// Relations skipped because they have no edges.
    pub warnings: Vec<String>,
}

impl StatsTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "country,relation,num_head,num_tail,num_edges,average_degree,clustering_coefficient,density,closeness,betweenness\n",
        );
        for r in &self.rows {
            let st = &r.stats;
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                r.country,
                r.relation,
                st.num_head_nodes,
                st.num_tail_nodes,
                st.num_edges,
                st.average_degree,
                st.clustering_coefficient,
                st.density,
                st.closeness,
                st.betweenness
            )
            .unwrap();
        }
        s
    }
}

/// One row of structural metrics per (graph file, non-empty relation).
pub fn cmd_stats(paths: &[PathBuf]) -> Result<StatsTable, CliError> {
    let mut table = StatsTable::default();
    for path in paths {
        let kg = read_graph_file(path).map_err(|e| io_err(path, e))?;
        for relation in RelationType::ALL {
            match relation_network_stats(&kg, relation) {
                Ok(stats) => table.rows.push(StatsRow {
                    country: kg.country().to_string(),
                    relation,
                    stats,
                }),
                Err(KgError::EmptyRelation(_)) => {
                    let msg = format!("{}: {relation} has no edges, row omitted", path.display());
                    log::warn!("{msg}");
                    table.warnings.push(msg);
                }
                Err(e) => return Err(io_err(path, e)),
            }
        }
    }
    Ok(table)
}
