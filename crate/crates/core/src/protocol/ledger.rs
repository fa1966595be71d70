use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub user: UserId,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
}

/// Exact per-round, per-client byte counts. Only participants get entries;
/// everyone else moved zero bytes that round.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommLedger {
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub client_rounds: usize,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub mean_bytes_per_client_round: f64,
}

impl CommLedger {
    pub fn record(&mut self, round: usize, user: UserId, uplink_bytes: u64, downlink_bytes: u64) {
        self.entries.push(LedgerEntry {
            round,
            user,
            uplink_bytes,
            downlink_bytes,
        });
    }

    /// `(uplink, downlink)` for a client in a round; zero if it sat out.
    pub fn traffic(&self, round: usize, user: UserId) -> (u64, u64) {
        self.entries
            .iter()
            .filter(|e| e.round == round && e.user == user)
            .fold((0, 0), |(u, d), e| (u + e.uplink_bytes, d + e.downlink_bytes))
    }

    pub fn round_entries(&self, round: usize) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.iter().filter(move |e| e.round == round)
    }

    pub fn summary(&self) -> LedgerSummary {
        let up: u64 = self.entries.iter().map(|e| e.uplink_bytes).sum();
        let down: u64 = self.entries.iter().map(|e| e.downlink_bytes).sum();
        let n = self.entries.len();
        LedgerSummary {
            client_rounds: n,
            uplink_bytes: up,
            downlink_bytes: down,
            mean_bytes_per_client_round: if n == 0 { 0.0 } else { (up + down) as f64 / n as f64 },
        }
    }

    /// `round,user,uplink_bytes,downlink_bytes`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,user,uplink_bytes,downlink_bytes\n");
        for e in &self.entries {
            let _ = writeln!(out, "{},{},{},{}", e.round, e.user.0, e.uplink_bytes, e.downlink_bytes);
        }
        out
    }
}
