//! Experiment configuration, presets and report bundles behind the
//! command-line tool.

pub mod config;
pub mod preset;
pub mod report;
pub mod run;

use std::path::PathBuf;

use thiserror::Error;

use crate::models::ModelError;
use crate::protocol::ProtocolError;

pub use config::{parse_config, ConfigError, DatasetSource, ExperimentConfig};
pub use preset::{preset_cells, run_config, run_preset, Cell, PRESETS};
pub use report::{read_summary, BundleSummary, CellSummary, Stat};
pub use run::{metrics_csv, run_single, RunOutput};

/// Environment variable naming the default output directory.
pub const OUTPUT_ENV: &str = "PTF_FEDREC_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown preset `{0}` (expected one of: {list})", list = PRESETS.join(", "))]
    UnknownPreset(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad summary document: {0}")]
    Json(#[from] serde_json::Error),
}
