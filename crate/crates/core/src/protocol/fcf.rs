//! Parameter-averaging baseline: a public item table travels to every
//! participant and back each round, and the server averages the returns.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::domain::{InteractionStore, ItemId, UserId};
use crate::eval::{rank_eval, RankingMetrics};
use crate::models::loss::{bce, bce_logit_grad};
use crate::models::tensor::{dot, sigmoid, RowGrad};
use crate::models::{Adam, Gradient, Param};
use crate::rng::{Purpose, SeedStream};

use super::ledger::CommLedger;
use super::wire;
use super::world::{select_participants, EvalPoint, RoundReport, Simulation, WorldConfig};
use super::ProtocolError;

/// Embedding init bound of the baseline's dot-product model.
pub const FCF_INIT_BOUND: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FcfWorld {
    pub store: InteractionStore,
    /// Public item table (`n_items × dim`).
    pub items: Param,
    /// Private per-client user vectors.
    pub users: Vec<Vec<f64>>,
    pub ledger: CommLedger,
    pub config: WorldConfig,
    seeds: SeedStream,
}

/// Element-wise mean of equally shaped tables, summed in the given order
/// (the same arithmetic a round applies to the returned tables).
pub fn fedavg(tables: &[Vec<f64>]) -> Vec<f64> {
    assert!(!tables.is_empty(), "nothing to average");
    let mut out = vec![0.0; tables[0].len()];
    for t in tables {
        assert_eq!(t.len(), out.len(), "table shape mismatch");
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    let n = tables.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

impl FcfWorld {
    pub fn new(store: InteractionStore, config: WorldConfig) -> Result<Self, ProtocolError> {
        config.round.validate()?;
        if !store.is_split() {
            return Err(ProtocolError::InvalidConfig("interaction store has no train/test split".into()));
        }
        let seeds = SeedStream::new(config.round.seed);
        let d = config.model.dim;
        let items = Param::uniform(store.n_items(), d, FCF_INIT_BOUND, &mut seeds.rng(Purpose::FcfInit, u64::MAX, 0));
        let users = store
            .users()
            .map(|u| Param::uniform(1, d, FCF_INIT_BOUND, &mut seeds.rng(Purpose::FcfInit, u.0 as u64, 1)).data)
            .collect();
        Ok(Self {
            store,
            items,
            users,
            ledger: CommLedger::default(),
            config,
            seeds,
        })
    }

    pub fn score(&self, user: UserId, item: ItemId) -> f64 {
        sigmoid(dot(&self.users[user.index()], self.items.row(item.index())))
    }

    /// One client's local round: fresh optimizer, trained pool as in the
    /// score-exchange protocol, updates `user_vec` in place and returns the
    /// final epoch's mean loss with the client's copy of the item table.
    pub fn client_update(&self, user: UserId, user_vec: &mut Vec<f64>, table: Vec<f64>, round: usize) -> (f64, Vec<f64>) {
        let d = self.config.model.dim;
        let cfg = &self.config.client;
        let mut rng = self.seeds.rng(Purpose::NegativePool, user.0 as u64, round as u64);
        let pool = self.store.resample_trained_pool(user, cfg.negative_ratio, &mut rng);
        let mut samples: Vec<(usize, f64)> = pool.labelled().map(|(i, l)| (i.index(), l.target())).collect();

        let mut params = vec![
            Param {
                rows: 1,
                cols: d,
                data: std::mem::take(user_vec),
            },
            Param {
                rows: self.items.rows,
                cols: d,
                data: table,
            },
        ];
        let mut adam = Adam::new(self.config.model.adam, &params);
        let mut rng = self.seeds.rng(Purpose::ClientShuffle, user.0 as u64, round as u64);
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.epochs {
            samples.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in samples.chunks(cfg.batch_size) {
                let scale = 1.0 / batch.len() as f64;
                let mut du = vec![0.0; d];
                let mut dv = RowGrad::new(d);
                for &(item, target) in batch {
                    let u = params[0].row(0);
                    let v = params[1].row(item);
                    let s = sigmoid(dot(u, v));
                    total += bce(s, target);
                    let g = bce_logit_grad(s, target) * scale;
                    for k in 0..d {
                        du[k] += g * v[k];
                    }
                    let row = dv.row_mut(item);
                    for k in 0..d {
                        row[k] += g * u[k];
                    }
                }
                adam.step(&mut params, &[Some(Gradient::Dense(du)), Some(dv.finish())]);
            }
            epoch_loss = total / samples.len().max(1) as f64;
        }
        let table = std::mem::take(&mut params[1].data);
        *user_vec = std::mem::take(&mut params[0].data);
        (epoch_loss, table)
    }
}

impl Simulation for FcfWorld {
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
        let downlink = wire::encode_f32_params(&self.items.data);
        let mut users = std::mem::take(&mut self.users);
        let this = &*self;
        let returned: Vec<(UserId, f64, Vec<u8>)> = users
            .par_iter_mut()
            .enumerate()
            .filter(|(u, _)| participants.binary_search(&UserId(*u as u32)).is_ok())
            .map(|(u, vec)| {
                let user = UserId(u as u32);
                let table = wire::decode_f32_params(&downlink)?;
                let (loss, table) = this.client_update(user, vec, table, round);
                Ok((user, loss, wire::encode_f32_params(&table)))
            })
            .collect::<Result<_, ProtocolError>>()?;
        self.users = users;

        let mut sum = vec![0.0; self.items.len()];
        let mut loss_sum = 0.0;
        let (mut up_total, mut down_total) = (0, 0);
        for (user, loss, bytes) in &returned {
            let table = wire::decode_f32_params(bytes)?;
            if table.len() != sum.len() {
                return Err(ProtocolError::InvalidState(format!(
                    "round {round}: client {user} returned {} values, expected {}",
                    table.len(),
                    sum.len()
                )));
            }
            sum.iter_mut().zip(&table).for_each(|(s, v)| *s += v);
            loss_sum += loss;
            self.ledger.record(round, *user, bytes.len() as u64, downlink.len() as u64);
            up_total += bytes.len() as u64;
            down_total += downlink.len() as u64;
        }
        let n = returned.len() as f64;
        let avg: Vec<f64> = sum.into_iter().map(|s| s / n).collect();
        if avg.iter().any(|v| !v.is_finite()) {
            return Err(ProtocolError::InvalidState(format!("round {round}: averaged item table is not finite")));
        }
        self.items.data = avg;

        let eval = if self.config.should_eval(round) {
            Some(EvalPoint::from(&self.evaluate()?))
        } else {
            None
        };
        Ok(RoundReport {
            round,
            participants: participants.len(),
            client_loss: loss_sum / participants.len() as f64,
            server_loss: None,
            uplink_bytes: up_total,
            downlink_bytes: down_total,
            mean_upload_len: self.items.len() as f64,
            attack_f1: None,
            attack_f1_all_positives: None,
            eval,
        })
    }

    fn evaluate(&self) -> Result<RankingMetrics, ProtocolError> {
        let n = self.store.n_items();
        Ok(rank_eval(
            |u| (0..n as u32).map(|i| self.score(u, ItemId(i))).collect(),
            &self.store,
            self.config.top_k,
        ))
    }
}
