use std::fmt::Write as _;

use crate::models::checkpoint;
use crate::protocol::{run_simulation, ExperimentReport, FcfWorld, Protocol, PtfWorld};

use super::config::ExperimentConfig;
use super::CliError;

/// Everything one seeded run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub seed: u64,
    pub report: ExperimentReport,
    pub ledger_csv: String,
    /// Encoded server model (score-exchange protocol only).
    pub checkpoint: Option<Vec<u8>>,
}

impl RunOutput {
    /// Headline numbers keyed by metric name.
    pub fn headline(&self) -> Vec<(&'static str, f64)> {
        let r = &self.report;
        let per_round = r.ledger.client_rounds.max(1) as f64;
        let mut out = vec![
            ("recall", r.final_metrics.recall),
            ("ndcg", r.final_metrics.ndcg),
            ("bytes_per_client_round", r.ledger.mean_bytes_per_client_round),
            ("uplink_per_client_round", r.ledger.uplink_bytes as f64 / per_round),
            ("downlink_per_client_round", r.ledger.downlink_bytes as f64 / per_round),
        ];
        if let Some(a) = &r.final_attack {
            out.push(("attack_f1", a.macro_f1));
            out.push(("attack_f1_all_positives", a.macro_f1_all_positives));
        }
        out
    }
}

pub fn run_single(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput, CliError> {
    let store = cfg.load_store(seed)?;
    let world_cfg = cfg.world_config(seed);
    match cfg.protocol {
        Protocol::Ptf => {
            let mut world = PtfWorld::new(store, world_cfg)?;
            let report = run_simulation(&mut world, Protocol::Ptf.label())?;
            Ok(RunOutput {
                seed,
                report,
                ledger_csv: world.ledger.to_csv(),
                checkpoint: Some(checkpoint::encode(world.server_model())),
            })
        }
        Protocol::Fcf => {
            let mut world = FcfWorld::new(store, world_cfg)?;
            let report = run_simulation(&mut world, Protocol::Fcf.label())?;
            Ok(RunOutput {
                seed,
                report,
                ledger_csv: world.ledger.to_csv(),
                checkpoint: None,
            })
        }
    }
}

/// Per-round series as `round,metric,value`.
pub fn metrics_csv(report: &ExperimentReport, top_k: usize) -> String {
    let mut out = String::from("round,metric,value\n");
    let mut row = |round: usize, metric: &str, value: f64| {
        let _ = writeln!(out, "{round},{metric},{value}");
    };
    for r in &report.rounds {
        row(r.round, "participants", r.participants as f64);
        row(r.round, "client_loss", r.client_loss);
        if let Some(l) = r.server_loss {
            row(r.round, "server_loss", l);
        }
        row(r.round, "uplink_bytes", r.uplink_bytes as f64);
        row(r.round, "downlink_bytes", r.downlink_bytes as f64);
        row(r.round, "mean_upload_len", r.mean_upload_len);
        if let Some(f1) = r.attack_f1 {
            row(r.round, "attack_f1", f1);
        }
        if let Some(f1) = r.attack_f1_all_positives {
            row(r.round, "attack_f1_all_positives", f1);
        }
        if let Some(e) = r.eval {
            row(r.round, &format!("recall@{top_k}"), e.recall);
            row(r.round, &format!("ndcg@{top_k}"), e.ndcg);
        }
    }
    out
}
