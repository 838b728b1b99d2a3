//! Plain `key=value` run configuration with dotted keys.
//!
//! ```text
//! seed = 7
//! out = results
//! clients = UK, KOREA, small
//! client.small.profile = profiles/small.profile
//! client.KOREA.edge_fraction = 0.1
//! synth.mode = planted
//! model.d = 32
//! train.variants = LocalM, FLavg
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fgs_core::eval::StatsRows;
use fgs_core::fed::{FederationConfig, ModelConfig, Variant};
use fgs_core::kg::SplitRatios;
use fgs_core::synth::{default_profile, default_profiles, CountryProfile, SynthMode};

use crate::CliError;

/// Where a client's graph comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientSource {
    /// Synthesized from a profile (built in or read from a profile file).
    Profile(CountryProfile),
    /// Read from a graph file.
    GraphFile(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSpec {
    pub name: String,
    pub source: ClientSource,
    /// Scales every relation's edge count of a synthesized client.
    pub edge_fraction: f64,
}

impl ClientSpec {
    /// The profile actually generated, after `edge_fraction`.
    pub fn profile(&self) -> Option<CountryProfile> {
        match &self.source {
            ClientSource::Profile(p) if self.edge_fraction == 1.0 => Some(p.clone()),
            ClientSource::Profile(p) => Some(p.with_edge_fraction(self.edge_fraction)),
            ClientSource::GraphFile(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub clients: Vec<ClientSpec>,
    pub synth_mode: SynthMode,
    pub n_blocks: usize,
    pub intra_block_mass: f64,
    pub split: SplitRatios,
    pub model: ModelConfig,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Defaults to `local_epochs`.
    pub finetune_epochs: Option<usize>,
    pub delta: f64,
    pub variants: Vec<Variant>,
    pub repetitions: usize,
    pub stats_rows: StatsRows,
    pub alpha: f64,
    /// Run independent (variant, run) pairs concurrently.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fed = FederationConfig::new(Variant::LocalM);
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            clients: default_profiles()
                .into_iter()
                .map(|p| ClientSpec {
                    name: p.name.clone(),
                    source: ClientSource::Profile(p),
                    edge_fraction: 1.0,
                })
                .collect(),
            synth_mode: SynthMode::PlantedBlocks,
            n_blocks: 4,
            intra_block_mass: 0.9,
            split: SplitRatios::default(),
            model: ModelConfig::default(),
            rounds: fed.rounds,
            local_epochs: fed.local_epochs,
            finetune_epochs: None,
            delta: fed.delta,
            variants: Variant::ALL.to_vec(),
            repetitions: 20,
            stats_rows: StatsRows::default(),
            alpha: 0.05,
            parallel: true,
        }
    }
}

fn config_err(key: &str, message: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {message}"))
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| config_err(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(config_err(key, format!("expected a boolean, got {value:?}"))),
    }
}

#[derive(Default)]
struct ClientOverrides {
    profile: Option<PathBuf>,
    graph: Option<PathBuf>,
    edge_fraction: Option<f64>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text on top of the defaults.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            let key = key.trim().to_string();
            if entries.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
        }

        let mut cfg = RunConfig::default();
        let resolve = |v: &str| base_dir.join(v);
        let mut client_names: Option<Vec<String>> = None;
        let mut overrides: BTreeMap<String, ClientOverrides> = BTreeMap::new();

        for (key, (line, value)) in &entries {
            let key = key.as_str();
            let v = value.as_str();
            let wrap = |e: CliError| match e {
                CliError::Config(m) => CliError::Config(format!("line {line}: {m}")),
                other => other,
            };
            (|| -> Result<(), CliError> {
                match key {
                    "seed" => cfg.seed = parse_value(key, v)?,
                    "out" => cfg.out = resolve(v),
                    "parallel" => cfg.parallel = parse_bool(key, v)?,
                    "clients" => {
                        client_names = Some(if v.eq_ignore_ascii_case("all") {
                            default_profiles().into_iter().map(|p| p.name).collect()
                        } else {
                            parse_list(key, v)?
                        })
                    }
                    "synth.mode" => cfg.synth_mode = parse_value(key, v)?,
                    "synth.n_blocks" => cfg.n_blocks = parse_value(key, v)?,
                    "synth.mass" | "synth.intra_block_prob_mass" => {
                        cfg.intra_block_mass = parse_value(key, v)?
                    }
                    "split.train" => cfg.split.train = parse_value(key, v)?,
                    "split.valid" => cfg.split.valid = parse_value(key, v)?,
                    "split.test" => cfg.split.test = parse_value(key, v)?,
                    "model.d" => cfg.model.dim = parse_value(key, v)?,
                    "model.k_layers" => cfg.model.k_layers = parse_value(key, v)?,
                    "model.k_sample" => cfg.model.k_sample = parse_value(key, v)?,
                    "model.lr" => cfg.model.learning_rate = parse_value(key, v)?,
                    "model.direction" => cfg.model.direction = parse_value(key, v)?,
                    "model.final_activation" => cfg.model.final_activation = parse_value(key, v)?,
                    "train.rounds" => cfg.rounds = parse_value(key, v)?,
                    "train.epochs" => cfg.local_epochs = parse_value(key, v)?,
                    "train.finetune_epochs" => cfg.finetune_epochs = Some(parse_value(key, v)?),
                    "train.delta" => cfg.delta = parse_value(key, v)?,
                    "train.variants" => cfg.variants = parse_list(key, v)?,
                    "train.repetitions" => cfg.repetitions = parse_value(key, v)?,
                    "stats.rows" => cfg.stats_rows = parse_value(key, v)?,
                    "stats.alpha" => cfg.alpha = parse_value(key, v)?,
                    _ => {
                        let rest = key
                            .strip_prefix("client.")
                            .ok_or_else(|| config_err(key, "unknown key"))?;
                        let (name, field) = rest
                            .rsplit_once('.')
                            .ok_or_else(|| config_err(key, "expected client.NAME.FIELD"))?;
                        let o = overrides.entry(name.to_string()).or_default();
                        match field {
                            "profile" => o.profile = Some(resolve(v)),
                            "graph" => o.graph = Some(resolve(v)),
                            "edge_fraction" => o.edge_fraction = Some(parse_value(key, v)?),
                            _ => return Err(config_err(key, "unknown client field")),
                        }
                    }
                }
                Ok(())
            })()
            .map_err(wrap)?;
        }

        if let Some(names) = client_names {
            cfg.clients = names
                .into_iter()
                .map(|name| {
                    let source = match default_profile(&name) {
                        Some(p) => ClientSource::Profile(p),
                        None => ClientSource::GraphFile(PathBuf::new()),
                    };
                    ClientSpec {
                        name,
                        source,
                        edge_fraction: 1.0,
                    }
                })
                .collect();
        }
        for (name, o) in overrides {
            let spec = cfg
                .clients
                .iter_mut()
                .find(|c| c.name == name)
                .ok_or_else(|| config_err(&format!("client.{name}"), "client is not listed in `clients`"))?;
            match (o.profile, o.graph) {
                (Some(_), Some(_)) => {
                    return Err(config_err(
                        &format!("client.{name}"),
                        "give either a profile or a graph, not both",
                    ))
                }
                (Some(path), None) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        config_err(&format!("client.{name}.profile"), format!("{}: {e}", path.display()))
                    })?;
                    let profile = CountryProfile::parse(&text)
                        .map_err(|e| config_err(&format!("client.{name}.profile"), e))?;
                    spec.source = ClientSource::Profile(profile);
                }
                (None, Some(path)) => spec.source = ClientSource::GraphFile(path),
                (None, None) => {}
            }
            if let Some(f) = o.edge_fraction {
                spec.edge_fraction = f;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.clients.is_empty() {
            return Err(config_err("clients", "at least one client is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.clients {
            if !seen.insert(c.name.as_str()) {
                return Err(config_err("clients", format!("duplicate client {}", c.name)));
            }
            if c.name.is_empty() || c.name.contains(['/', '\\', ',']) {
                return Err(config_err("clients", format!("invalid client name {:?}", c.name)));
            }
            match &c.source {
                ClientSource::GraphFile(p) if p.as_os_str().is_empty() => {
                    return Err(config_err(
                        &format!("client.{}", c.name),
                        "not a built-in profile; set client.NAME.profile or client.NAME.graph",
                    ))
                }
                ClientSource::GraphFile(p) if !p.is_file() => {
                    return Err(config_err(
                        &format!("client.{}.graph", c.name),
                        format!("{} does not exist", p.display()),
                    ))
                }
                _ => {}
            }
            if !(c.edge_fraction > 0.0 && c.edge_fraction <= 1.0) {
                return Err(config_err(
                    &format!("client.{}.edge_fraction", c.name),
                    "must lie in (0, 1]",
                ));
            }
        }
        if self.repetitions == 0 {
            return Err(config_err("train.repetitions", "must be at least 1"));
        }
        if self.rounds == 0 {
            return Err(config_err("train.rounds", "must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(config_err("train.variants", "at least one variant is required"));
        }
        if !(self.delta >= 0.0) {
            return Err(config_err("train.delta", "must be non-negative"));
        }
        if !(self.alpha == 0.05 || self.alpha == 0.10) {
            return Err(config_err("stats.alpha", "supported values are 0.05 and 0.10"));
        }
        if self.model.dim == 0 || self.model.k_layers == 0 {
            return Err(config_err("model", "d and k_layers must be at least 1"));
        }
        if !(self.model.learning_rate > 0.0) {
            return Err(config_err("model.lr", "must be positive"));
        }
        Ok(())
    }

    pub fn federation(&self, variant: Variant) -> FederationConfig {
        FederationConfig {
            rounds: self.rounds,
            local_epochs: self.local_epochs,
            variant,
            delta: self.delta,
            finetune_epochs: self.finetune_epochs.unwrap_or(self.local_epochs),
            parallel: false,
        }
    }
}
