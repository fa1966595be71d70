//! Round orchestration, the wire format, byte accounting and the
//! parameter-averaging baseline.

pub mod fcf;
pub mod ledger;
pub mod wire;
pub mod world;

use thiserror::Error;

use crate::domain::UserId;
use crate::models::ModelError;
use crate::server::ServerError;

pub use fcf::{fedavg, FcfWorld};
pub use ledger::{CommLedger, LedgerEntry, LedgerSummary};
pub use wire::WireError;
pub use world::{
    run_simulation, select_participants, EvalPoint, ExperimentReport, PtfWorld, RoundConfig, RoundReport, Simulation,
    WorldConfig,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("round {round}, client {user}: {source}")]
    Client {
        round: usize,
        user: UserId,
        #[source]
        source: ModelError,
    },
    #[error("round {round}, server: {source}")]
    Server {
        round: usize,
        #[source]
        source: ServerError,
    },
    #[error("{0}")]
    InvalidState(String),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Which protocol a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Ptf,
    Fcf,
}

impl Protocol {
    pub fn label(self) -> &'static str {
        match self {
            Protocol::Ptf => "ptf",
            Protocol::Fcf => "fcf",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ptf" => Ok(Protocol::Ptf),
            "fcf" => Ok(Protocol::Fcf),
            other => Err(format!("unknown protocol `{other}` (ptf, fcf)")),
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Build the world for `protocol` and run it to completion.
pub fn run_experiment(
    store: crate::domain::InteractionStore,
    config: &WorldConfig,
    protocol: Protocol,
) -> Result<ExperimentReport, ProtocolError> {
    match protocol {
        Protocol::Ptf => run_simulation(&mut PtfWorld::new(store, config.clone())?, protocol.label()),
        Protocol::Fcf => run_simulation(&mut FcfWorld::new(store, config.clone())?, protocol.label()),
    }
}
