use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::{ClientConfig, Defense};
use crate::domain::{load_interactions, DatasetFormat, DomainError, InteractionStore, SplitConfig};
use crate::eval::{make_planted_instance, PlantedConfig};
use crate::models::{AdamConfig, Architecture, ModelConfig};
use crate::protocol::{Protocol, RoundConfig, WorldConfig};
use crate::server::{HintStrategy, ServerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("`{key}` = {value} is out of range ({range})")]
    OutOfRange { key: String, value: String, range: String },
    #[error("no dataset given (set `dataset = <path>` or `dataset = planted(users,items,clusters)`)")]
    MissingDataset,
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dataset(#[from] DomainError),
}

/// Where interactions come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DatasetSource {
    File { path: PathBuf },
    Planted { users: usize, items: usize, clusters: usize },
}

impl fmt::Display for DatasetSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DatasetSource::File { path } => write!(f, "{}", path.display()),
            DatasetSource::Planted { users, items, clusters } => write!(f, "planted({users},{items},{clusters})"),
        }
    }
}

impl FromStr for DatasetSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(inner) = s.strip_prefix("planted(").and_then(|r| r.strip_suffix(')')) {
            let parts: Vec<usize> = inner
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| format!("planted arguments: {e}"))?;
            let [users, items, clusters] = parts[..] else {
                return Err("planted takes (users, items, clusters)".into());
            };
            if clusters == 0 || users % clusters != 0 || items % clusters != 0 {
                return Err("clusters must be >= 1 and divide users and items".into());
            }
            return Ok(DatasetSource::Planted { users, items, clusters });
        }
        if s.is_empty() {
            return Err("empty path".into());
        }
        Ok(DatasetSource::File { path: PathBuf::from(s) })
    }
}

/// Fully resolved settings of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: Option<DatasetSource>,
    pub format: DatasetFormat,
    pub train_fraction: f64,
    pub protocol: Protocol,
    pub client_arch: Architecture,
    pub server_arch: Architecture,
    pub rounds: usize,
    pub participation: f64,
    pub client_epochs: usize,
    pub server_epochs: usize,
    pub client_batch: usize,
    pub server_batch: usize,
    pub lr: f64,
    pub dim: usize,
    pub graph_layers: usize,
    pub negative_ratio: usize,
    pub alpha: usize,
    pub mu: f64,
    pub lambda: f64,
    pub beta_min: f64,
    pub beta_max: f64,
    pub gamma_min: u32,
    pub gamma_max: u32,
    pub defense: Defense,
    pub hint: HintStrategy,
    pub edge_threshold: f64,
    pub top_k: usize,
    pub eval_every: usize,
    pub attack_gamma: f64,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let client = ClientConfig::default();
        let server = ServerConfig::default();
        let model = ModelConfig::default();
        Self {
            dataset: None,
            format: DatasetFormat::MovieLens100k,
            train_fraction: SplitConfig::default().train_fraction,
            protocol: Protocol::Ptf,
            client_arch: Architecture::NeuMf,
            server_arch: Architecture::NeuMf,
            rounds: RoundConfig::default().rounds,
            participation: 1.0,
            client_epochs: client.epochs,
            server_epochs: server.epochs,
            client_batch: client.batch_size,
            server_batch: server.batch_size,
            lr: model.adam.lr,
            dim: model.dim,
            graph_layers: model.graph_layers,
            negative_ratio: client.negative_ratio,
            alpha: server.alpha,
            mu: server.mu,
            lambda: client.swap_prob,
            beta_min: client.beta_range.0,
            beta_max: client.beta_range.1,
            gamma_min: client.gamma_range.0,
            gamma_max: client.gamma_range.1,
            defense: client.defense,
            hint: server.strategy,
            edge_threshold: server.edge_threshold,
            top_k: 20,
            eval_every: 0,
            attack_gamma: 0.2,
            seeds: vec![0, 1, 2],
            output: None,
        }
    }
}

/// Every key accepted in a config document, in echo order.
pub const KEYS: &[&str] = &[
    "dataset",
    "format",
    "train_fraction",
    "protocol",
    "client_arch",
    "server_arch",
    "rounds",
    "participation",
    "client_epochs",
    "server_epochs",
    "client_batch",
    "server_batch",
    "lr",
    "dim",
    "graph_layers",
    "negative_ratio",
    "alpha",
    "mu",
    "lambda",
    "beta_min",
    "beta_max",
    "gamma_min",
    "gamma_max",
    "defense",
    "hint",
    "edge_threshold",
    "top_k",
    "eval_every",
    "attack_gamma",
    "seeds",
    "output",
];

fn normalize_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

fn parse_as<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

impl ExperimentConfig {
    /// Apply one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = normalize_key(key);
        let k = key.as_str();
        let v = value.trim();
        match k {
            "dataset" => {
                self.dataset = Some(parse_as(k, v)?);
            }
            "format" => self.format = parse_as(k, v)?,
            "train_fraction" => self.train_fraction = parse_as(k, v)?,
            "protocol" => self.protocol = parse_as(k, v)?,
            "client_arch" => self.client_arch = parse_as(k, v)?,
            "server_arch" => self.server_arch = parse_as(k, v)?,
            "rounds" => self.rounds = parse_as(k, v)?,
            "participation" => self.participation = parse_as(k, v)?,
            "client_epochs" => self.client_epochs = parse_as(k, v)?,
            "server_epochs" => self.server_epochs = parse_as(k, v)?,
            "client_batch" => self.client_batch = parse_as(k, v)?,
            "server_batch" => self.server_batch = parse_as(k, v)?,
            "lr" => self.lr = parse_as(k, v)?,
            "dim" => self.dim = parse_as(k, v)?,
            "graph_layers" => self.graph_layers = parse_as(k, v)?,
            "negative_ratio" => self.negative_ratio = parse_as(k, v)?,
            "alpha" => self.alpha = parse_as(k, v)?,
            "mu" => self.mu = parse_as(k, v)?,
            "lambda" => self.lambda = parse_as(k, v)?,
            "beta_min" => self.beta_min = parse_as(k, v)?,
            "beta_max" => self.beta_max = parse_as(k, v)?,
            "gamma_min" => self.gamma_min = parse_as(k, v)?,
            "gamma_max" => self.gamma_max = parse_as(k, v)?,
            "defense" => self.defense = parse_as(k, v)?,
            "hint" => self.hint = parse_as(k, v)?,
            "edge_threshold" => self.edge_threshold = parse_as(k, v)?,
            "top_k" => self.top_k = parse_as(k, v)?,
            "eval_every" => self.eval_every = parse_as(k, v)?,
            "attack_gamma" => self.attack_gamma = parse_as(k, v)?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_as::<u64>(k, s))
                    .collect::<Result<_, _>>()?;
            }
            "output" => self.output = Some(PathBuf::from(v)),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Parse a `key = value` document on top of the defaults. Blank lines and
    /// `#` comments are ignored. The result is not yet validated.
    pub fn parse_document(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_document(text)?;
        Ok(cfg)
    }

    pub fn apply_document(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                text: raw.to_string(),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_document(&text)
    }

    /// Value of `key` as it appears in the echo.
    pub fn get(&self, key: &str) -> Option<String> {
        let opt = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        Some(match normalize_key(key).as_str() {
            "dataset" => self.dataset.as_ref().map(|d| d.to_string()).unwrap_or_default(),
            "format" => self.format.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "protocol" => self.protocol.to_string(),
            "client_arch" => self.client_arch.to_string(),
            "server_arch" => self.server_arch.to_string(),
            "rounds" => self.rounds.to_string(),
            "participation" => self.participation.to_string(),
            "client_epochs" => self.client_epochs.to_string(),
            "server_epochs" => self.server_epochs.to_string(),
            "client_batch" => self.client_batch.to_string(),
            "server_batch" => self.server_batch.to_string(),
            "lr" => self.lr.to_string(),
            "dim" => self.dim.to_string(),
            "graph_layers" => self.graph_layers.to_string(),
            "negative_ratio" => self.negative_ratio.to_string(),
            "alpha" => self.alpha.to_string(),
            "mu" => self.mu.to_string(),
            "lambda" => self.lambda.to_string(),
            "beta_min" => self.beta_min.to_string(),
            "beta_max" => self.beta_max.to_string(),
            "gamma_min" => self.gamma_min.to_string(),
            "gamma_max" => self.gamma_max.to_string(),
            "defense" => self.defense.label(),
            "hint" => self.hint.label().to_string(),
            "edge_threshold" => self.edge_threshold.to_string(),
            "top_k" => self.top_k.to_string(),
            "eval_every" => self.eval_every.to_string(),
            "attack_gamma" => self.attack_gamma.to_string(),
            "seeds" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "output" => opt(&self.output),
            _ => return None,
        })
    }

    /// The resolved configuration as a document `parse_document` accepts.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).unwrap_or_default();
            if value.is_empty() {
                continue;
            }
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }

    /// Range checks; `require_dataset` additionally demands a data source.
    pub fn validate(&self, require_dataset: bool) -> Result<(), ConfigError> {
        fn range(key: &str, value: impl fmt::Display, ok: bool, desc: &str) -> Result<(), ConfigError> {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    key: key.into(),
                    value: value.to_string(),
                    range: desc.into(),
                })
            }
        }
        if require_dataset && self.dataset.is_none() {
            return Err(ConfigError::MissingDataset);
        }
        let unit_open = |x: f64| x > 0.0 && x < 1.0;
        range("train_fraction", self.train_fraction, unit_open(self.train_fraction), "0 < x < 1")?;
        range("rounds", self.rounds, self.rounds >= 1, ">= 1")?;
        range(
            "participation",
            self.participation,
            self.participation > 0.0 && self.participation <= 1.0,
            "0 < x <= 1",
        )?;
        range("client_epochs", self.client_epochs, self.client_epochs >= 1, ">= 1")?;
        range("server_epochs", self.server_epochs, self.server_epochs >= 1, ">= 1")?;
        range("client_batch", self.client_batch, self.client_batch >= 1, ">= 1")?;
        range("server_batch", self.server_batch, self.server_batch >= 1, ">= 1")?;
        range("lr", self.lr, self.lr > 0.0 && self.lr.is_finite(), "> 0")?;
        range("dim", self.dim, self.dim >= 1, ">= 1")?;
        range("negative_ratio", self.negative_ratio, self.negative_ratio >= 1, ">= 1")?;
        range("alpha", self.alpha, self.alpha >= 1, ">= 1")?;
        range("mu", self.mu, (0.0..=1.0).contains(&self.mu), "0 <= x <= 1")?;
        range("lambda", self.lambda, (0.0..=1.0).contains(&self.lambda), "0 <= x <= 1")?;
        range(
            "beta_min",
            self.beta_min,
            self.beta_min > 0.0 && self.beta_min <= self.beta_max,
            "0 < beta_min <= beta_max",
        )?;
        range("beta_max", self.beta_max, self.beta_max <= 1.0, "<= 1")?;
        range(
            "gamma_min",
            self.gamma_min,
            self.gamma_min <= self.gamma_max,
            "gamma_min <= gamma_max",
        )?;
        range(
            "edge_threshold",
            self.edge_threshold,
            (0.0..1.0).contains(&self.edge_threshold),
            "0 <= x < 1",
        )?;
        range("top_k", self.top_k, self.top_k >= 1, ">= 1")?;
        range(
            "attack_gamma",
            self.attack_gamma,
            self.attack_gamma > 0.0 && self.attack_gamma <= 1.0,
            "0 < x <= 1",
        )?;
        range("seeds", self.seeds.len(), !self.seeds.is_empty(), "at least one seed")?;
        Ok(())
    }

    pub fn split_config(&self, seed: u64) -> SplitConfig {
        SplitConfig {
            train_fraction: self.train_fraction,
            negative_ratio: self.negative_ratio,
            seed,
        }
    }

    /// Load (or synthesize) the interactions and split them for `seed`.
    pub fn load_store(&self, seed: u64) -> Result<InteractionStore, ConfigError> {
        let raw = match self.dataset.as_ref().ok_or(ConfigError::MissingDataset)? {
            DatasetSource::File { path } => load_interactions(path, self.format)?,
            DatasetSource::Planted { users, items, clusters } => {
                make_planted_instance(&PlantedConfig::new(*users, *items, *clusters, seed))
            }
        };
        Ok(raw.split_train_test(&self.split_config(seed))?)
    }

    pub fn world_config(&self, seed: u64) -> WorldConfig {
        WorldConfig {
            client_arch: self.client_arch,
            server_arch: self.server_arch,
            model: ModelConfig {
                dim: self.dim,
                graph_layers: self.graph_layers,
                adam: AdamConfig {
                    lr: self.lr,
                    ..AdamConfig::default()
                },
                ..ModelConfig::default()
            },
            client: ClientConfig {
                epochs: self.client_epochs,
                batch_size: self.client_batch,
                negative_ratio: self.negative_ratio,
                beta_range: (self.beta_min, self.beta_max),
                gamma_range: (self.gamma_min, self.gamma_max),
                swap_prob: self.lambda,
                defense: self.defense,
            },
            server: ServerConfig {
                epochs: self.server_epochs,
                batch_size: self.server_batch,
                alpha: self.alpha,
                mu: self.mu,
                edge_threshold: self.edge_threshold,
                strategy: self.hint,
            },
            round: RoundConfig {
                rounds: self.rounds,
                participation: self.participation,
                seed,
            },
            eval_every: self.eval_every,
            top_k: self.top_k,
            attack_gamma: self.attack_gamma,
        }
    }
}

/// Defaults, then an optional document, then `key=value` overrides; the
/// result is validated and must name a dataset.
pub fn parse_config(document: Option<&str>, overrides: &[(String, String)]) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    if let Some(text) = document {
        cfg.apply_document(text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    cfg.validate(true)?;
    Ok(cfg)
}
