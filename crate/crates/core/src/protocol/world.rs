use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::{ClientConfig, ClientState, UploadPayload};
use crate::domain::{InteractionStore, UserId};
use crate::eval::{attack_report, rank_eval, AttackReport, RankingMetrics};
use crate::models::{Architecture, ModelConfig, ModelState};
use crate::rng::{Purpose, SeedStream};
use crate::server::{ServerConfig, ServerState};

use super::ledger::{CommLedger, LedgerSummary};
use super::wire;
use super::ProtocolError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundConfig {
    pub rounds: usize,
    /// Fraction of clients sampled each round.
    pub participation: f64,
    pub seed: u64,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            participation: 1.0,
            seed: 0,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.rounds == 0 {
            return Err(ProtocolError::InvalidConfig("rounds must be >= 1".into()));
        }
        if !(self.participation > 0.0 && self.participation <= 1.0) {
            return Err(ProtocolError::InvalidConfig(format!(
                "participation must be in (0, 1], got {}",
                self.participation
            )));
        }
        Ok(())
    }
}

/// Everything a simulated deployment needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub client_arch: Architecture,
    pub server_arch: Architecture,
    pub model: ModelConfig,
    pub client: ClientConfig,
    pub server: ServerConfig,
    pub round: RoundConfig,
    /// Evaluate inside every this many rounds; 0 disables. The finished run is
    /// always evaluated.
    pub eval_every: usize,
    pub top_k: usize,
    /// Guess fraction of the top-guess attack.
    pub attack_gamma: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            client_arch: Architecture::NeuMf,
            server_arch: Architecture::NeuMf,
            model: ModelConfig::default(),
            client: ClientConfig::default(),
            server: ServerConfig::default(),
            round: RoundConfig::default(),
            eval_every: 0,
            top_k: 20,
            attack_gamma: 0.2,
        }
    }
}

impl WorldConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.round.seed = seed;
        self
    }

    pub fn should_eval(&self, round: usize) -> bool {
        self.eval_every > 0 && (round + 1) % self.eval_every == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub recall: f64,
    pub ndcg: f64,
}

impl From<&RankingMetrics> for EvalPoint {
    fn from(m: &RankingMetrics) -> Self {
        Self {
            recall: m.recall,
            ndcg: m.ndcg,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub participants: usize,
    pub client_loss: f64,
    pub server_loss: Option<f64>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub mean_upload_len: f64,
    pub attack_f1: Option<f64>,
    pub attack_f1_all_positives: Option<f64>,
    pub eval: Option<EvalPoint>,
}

/// Sorted participants of a round: `max(1, round(fraction · n))` clients
/// drawn uniformly without replacement.
pub fn select_participants(n_users: usize, fraction: f64, seeds: &SeedStream, round: usize) -> Vec<UserId> {
    if fraction >= 1.0 {
        return (0..n_users as u32).map(UserId).collect();
    }
    let k = ((fraction * n_users as f64).round() as usize).clamp(1, n_users);
    let mut rng = seeds.rng(Purpose::Participation, round as u64, 0);
    let mut picked: Vec<UserId> = index::sample(&mut rng, n_users, k)
        .into_iter()
        .map(|i| UserId(i as u32))
        .collect();
    picked.sort_unstable();
    picked
}

/// Common driver interface of the score-exchange and parameter-averaging
/// protocols.
pub trait Simulation {
    fn config(&self) -> &WorldConfig;
    fn store(&self) -> &InteractionStore;
    fn ledger(&self) -> &CommLedger;
    fn run_round(&mut self, round: usize) -> Result<RoundReport, ProtocolError>;
    fn evaluate(&self) -> Result<RankingMetrics, ProtocolError>;
    fn final_attack(&self) -> Option<&AttackReport> {
        None
    }
}

/// The score-exchange deployment: one client per user plus the server.
pub struct PtfWorld {
    pub store: InteractionStore,
    pub clients: Vec<ClientState>,
    pub server: ServerState,
    pub ledger: CommLedger,
    pub config: WorldConfig,
    /// Attack outcome on the most recent round's uploads.
    pub last_attack: Option<AttackReport>,
    seeds: SeedStream,
}

impl PtfWorld {
    pub fn new(store: InteractionStore, config: WorldConfig) -> Result<Self, ProtocolError> {
        config.round.validate()?;
        if !store.is_split() {
            return Err(ProtocolError::InvalidConfig("interaction store has no train/test split".into()));
        }
        let seeds = SeedStream::new(config.round.seed);
        let clients = store
            .users()
            .map(|u| ClientState::new(u, config.client_arch, &store, &config.model, config.client.clone(), seeds))
            .collect();
        let server = ServerState::new(
            config.server_arch,
            store.n_users(),
            store.n_items(),
            &config.model,
            config.server.clone(),
            seeds,
        );
        Ok(Self {
            store,
            clients,
            server,
            ledger: CommLedger::default(),
            config,
            last_attack: None,
            seeds,
        })
    }

    pub fn server_model(&self) -> &ModelState {
        &self.server.model
    }
}

impl Simulation for PtfWorld {
    fn config(&self) -> &WorldConfig {
        &self.config
    }

    fn store(&self) -> &InteractionStore {
        &self.store
    }

    fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    fn run_round(&mut self, round: usize) -> Result<RoundReport, ProtocolError> {
        let participants = select_participants(self.store.n_users(), self.config.round.participation, &self.seeds, round);
        let mut active = vec![false; self.clients.len()];
        for u in &participants {
            active[u.index()] = true;
        }

        let store = &self.store;
        let results: Vec<(UserId, f64, Vec<u8>)> = self
            .clients
            .par_iter_mut()
            .filter(|c| active[c.user.index()])
            .map(|c| {
                let r = c.run_round(store, round).map_err(|source| ProtocolError::Client {
                    round,
                    user: c.user,
                    source,
                })?;
                Ok((c.user, r.loss, wire::encode_upload(&r.payload)))
            })
            .collect::<Result<_, ProtocolError>>()?;

        let mut uplink = vec![0u64; self.clients.len()];
        let mut payloads: Vec<UploadPayload> = Vec::with_capacity(results.len());
        let mut loss_sum = 0.0;
        for (user, loss, bytes) in &results {
            uplink[user.index()] = bytes.len() as u64;
            payloads.push(wire::decode_upload(bytes)?);
            loss_sum += loss;
        }

        let attack = attack_report(
            payloads.iter().map(|p| (p.user, p.entries.as_slice())),
            self.config.attack_gamma,
            |u, i| store.is_train_positive(u, i),
            |u| store.train(u).len(),
        );
        let server_loss = self
            .server
            .server_train(&payloads, round)
            .map_err(|source| ProtocolError::Server { round, source })?;
        let hints = self
            .server
            .build_hints(&participants, round)
            .map_err(|source| ProtocolError::Server { round, source })?;

        let mut up_total = 0;
        let mut down_total = 0;
        for hint in &hints {
            let bytes = wire::encode_hint(hint);
            let decoded = wire::decode_hint(&bytes)?;
            self.clients[decoded.user.index()].receive_hint(&decoded.entries, store);
            let up = uplink[hint.user.index()];
            self.ledger.record(round, hint.user, up, bytes.len() as u64);
            up_total += up;
            down_total += bytes.len() as u64;
        }

        let n = participants.len() as f64;
        let mean_upload_len = payloads.iter().map(|p| p.len()).sum::<usize>() as f64 / n;
        let attack_f1 = Some(attack.macro_f1);
        let attack_f1_all_positives = Some(attack.macro_f1_all_positives);
        self.last_attack = Some(attack);
        let eval = if self.config.should_eval(round) {
            Some(EvalPoint::from(&self.evaluate()?))
        } else {
            None
        };
        Ok(RoundReport {
            round,
            participants: participants.len(),
            client_loss: loss_sum / n,
            server_loss: Some(server_loss),
            uplink_bytes: up_total,
            downlink_bytes: down_total,
            mean_upload_len,
            attack_f1,
            attack_f1_all_positives,
            eval,
        })
    }

    /// Ranking quality of the server model.
    fn evaluate(&self) -> Result<RankingMetrics, ProtocolError> {
        let scorer = self.server.model.catalogue_scorer()?;
        Ok(rank_eval(|u| scorer.score_all(u), &self.store, self.config.top_k))
    }

    fn final_attack(&self) -> Option<&AttackReport> {
        self.last_attack.as_ref()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub protocol: String,
    pub seed: u64,
    pub rounds: Vec<RoundReport>,
    pub final_metrics: RankingMetrics,
    pub final_attack: Option<AttackReport>,
    pub ledger: LedgerSummary,
}

impl ExperimentReport {
    /// Attack F1 of the last round, if the protocol exposes scores.
    pub fn final_attack_f1(&self) -> Option<f64> {
        self.final_attack.as_ref().map(|a| a.macro_f1)
    }
}

/// Run every configured round, then evaluate once more on the final state.
pub fn run_simulation<S: Simulation>(sim: &mut S, protocol: &str) -> Result<ExperimentReport, ProtocolError> {
    let mut rounds = Vec::with_capacity(sim.config().round.rounds);
    for t in 0..sim.config().round.rounds {
        rounds.push(sim.run_round(t)?);
    }
    let final_metrics = sim.evaluate()?;
    if let Some(last) = rounds.last_mut() {
        last.eval.get_or_insert(EvalPoint::from(&final_metrics));
    }
    Ok(ExperimentReport {
        protocol: protocol.to_string(),
        seed: sim.config().round.seed,
        rounds,
        final_metrics,
        final_attack: sim.final_attack().cloned(),
        ledger: sim.ledger().summary(),
    })
}
