//! Server-side round logic: fit the hidden model to uploaded prediction
//! scores, then build a per-client hint of confidently-known and hard items.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::client::UploadPayload;
use crate::domain::{ItemId, UserId};
use crate::models::{Architecture, CatalogueScorer, ModelConfig, ModelError, ModelState, Sample};
use crate::rng::{Purpose, SeedStream};

/// Which halves of the hint are chosen deliberately; replaced halves are
/// drawn uniformly from the eligible items.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HintStrategy {
    Full,
    NoHard,
    NoConfidence,
    Random,
}

impl HintStrategy {
    pub const ALL: [HintStrategy; 4] = [
        HintStrategy::Full,
        HintStrategy::NoHard,
        HintStrategy::NoConfidence,
        HintStrategy::Random,
    ];

    pub fn label(self) -> &'static str {
        match self {
            HintStrategy::Full => "full",
            HintStrategy::NoHard => "no-hard",
            HintStrategy::NoConfidence => "no-confidence",
            HintStrategy::Random => "random",
        }
    }
}

impl std::str::FromStr for HintStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HintStrategy::ALL
            .into_iter()
            .find(|h| h.label() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown hint strategy `{s}` (full, no-hard, no-confidence, random)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Hint size α.
    pub alpha: usize,
    /// Confidence share μ of the hint.
    pub mu: f64,
    /// Uploaded scores above this become edges of the server's graph.
    pub edge_threshold: f64,
    pub strategy: HintStrategy,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 1024,
            alpha: 30,
            mu: 0.5,
            edge_threshold: 0.5,
            strategy: HintStrategy::Full,
        }
    }
}

impl ServerConfig {
    /// `(confidence, hard)` slot counts: ⌈μα⌉ and the remainder.
    pub fn split(&self) -> (usize, usize) {
        let conf = ((self.mu * self.alpha as f64) - 1e-9).ceil().max(0.0) as usize;
        let conf = conf.min(self.alpha);
        (conf, self.alpha - conf)
    }
}

/// Server predictions sent back to one client.
#[derive(Debug, Clone, PartialEq)]
pub struct HintDataset {
    pub user: UserId,
    pub entries: Vec<(ItemId, f64)>,
}

impl HintDataset {
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("server_train called without any payload")]
    NoPayloads,
    #[error("no upload recorded for {0} this round")]
    NoUpload(UserId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct ServerState {
    pub model: ModelState,
    pub config: ServerConfig,
    /// Sorted item ids of each client's latest upload.
    last_upload: Vec<Option<Vec<ItemId>>>,
    seeds: SeedStream,
}

impl ServerState {
    pub fn new(
        arch: Architecture,
        n_users: usize,
        n_items: usize,
        model_config: &ModelConfig,
        config: ServerConfig,
        seeds: SeedStream,
    ) -> Self {
        let mut rng = seeds.rng(Purpose::ServerInit, 0, 0);
        let mut model = ModelState::new(arch, n_users, n_items, model_config, &mut rng);
        model.enable_item_counters();
        model.propagate();
        Self {
            model,
            config,
            last_upload: vec![None; n_users],
            seeds,
        }
    }

    pub fn item_updates(&self) -> &[u64] {
        self.model.item_updates().expect("server counters enabled")
    }

    pub fn last_upload(&self, user: UserId) -> Option<&[ItemId]> {
        self.last_upload[user.index()].as_deref()
    }

    /// Fit the hidden model to this round's uploads. Returns the final
    /// epoch's mean loss.
    pub fn server_train(&mut self, payloads: &[UploadPayload], round: usize) -> Result<f64, ServerError> {
        if payloads.is_empty() {
            return Err(ServerError::NoPayloads);
        }
        let mut ordered: Vec<&UploadPayload> = payloads.iter().collect();
        ordered.sort_by_key(|p| p.user);

        for p in &ordered {
            let mut items: Vec<ItemId> = p.items().collect();
            items.sort_unstable();
            self.last_upload[p.user.index()] = Some(items);
        }
        if self.model.architecture().is_graph() {
            let threshold = self.config.edge_threshold;
            let edges: Vec<(UserId, ItemId)> = ordered
                .iter()
                .flat_map(|p| p.entries.iter().filter(|e| e.1 > threshold).map(move |e| (p.user, e.0)))
                .collect();
            self.model.set_graph_edges(edges);
        }

        let mut samples: Vec<Sample> = ordered
            .iter()
            .flat_map(|p| {
                p.entries.iter().map(move |&(item, target)| Sample {
                    user: p.user,
                    item,
                    target,
                })
            })
            .collect();
        let mut rng = self.seeds.rng(Purpose::ServerShuffle, round as u64, 0);
        let mut epoch_loss = 0.0;
        for _ in 0..self.config.epochs {
            samples.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in samples.chunks(self.config.batch_size) {
                total += self.model.train_batch(batch)? * batch.len() as f64;
            }
            epoch_loss = total / samples.len() as f64;
        }
        self.model.propagate();
        Ok(epoch_loss)
    }

    /// Items ordered by update count (desc), ties by id.
    pub fn frequency_order(&self) -> Vec<ItemId> {
        let counts = self.item_updates();
        let mut order: Vec<ItemId> = (0..counts.len() as u32).map(ItemId).collect();
        order.sort_by(|a, b| counts[b.index()].cmp(&counts[a.index()]).then(a.cmp(b)));
        order
    }

    pub fn build_hint(&self, user: UserId, round: usize) -> Result<HintDataset, ServerError> {
        self.build_hint_ablated(user, self.config.strategy, round)
    }

    pub fn build_hint_ablated(&self, user: UserId, strategy: HintStrategy, round: usize) -> Result<HintDataset, ServerError> {
        let scorer = self.model.catalogue_scorer()?;
        let order = self.frequency_order();
        self.hint_with(&scorer, &order, user, strategy, round)
    }

    /// Hints for many users sharing one scorer and frequency order.
    pub fn build_hints(&self, users: &[UserId], round: usize) -> Result<Vec<HintDataset>, ServerError> {
        let scorer = self.model.catalogue_scorer()?;
        let order = self.frequency_order();
        users
            .iter()
            .map(|&u| self.hint_with(&scorer, &order, u, self.config.strategy, round))
            .collect()
    }

    fn hint_with(
        &self,
        scorer: &CatalogueScorer<'_>,
        freq_order: &[ItemId],
        user: UserId,
        strategy: HintStrategy,
        round: usize,
    ) -> Result<HintDataset, ServerError> {
        let uploaded = self.last_upload(user).ok_or(ServerError::NoUpload(user))?;
        let eligible = |i: &ItemId| uploaded.binary_search(i).is_err();
        let (n_conf, n_hard) = self.config.split();
        let mut rng = self.seeds.rng(Purpose::HintRandom, user.0 as u64, round as u64);
        let mut chosen: Vec<ItemId> = Vec::with_capacity(self.config.alpha);
        let mut taken: HashSet<ItemId> = HashSet::new();

        let mut take_random = |n: usize, chosen: &mut Vec<ItemId>, taken: &mut HashSet<ItemId>| {
            let pool: Vec<ItemId> = freq_order
                .iter()
                .copied()
                .filter(|i| eligible(i) && !taken.contains(i))
                .collect();
            let mut pool = pool;
            pool.sort_unstable();
            for &i in pool.choose_multiple(&mut rng, n.min(pool.len())) {
                taken.insert(i);
                chosen.push(i);
            }
        };

        let confidence_first = matches!(strategy, HintStrategy::Full | HintStrategy::NoHard);
        if confidence_first {
            for &i in freq_order.iter().filter(|i| eligible(i)).take(n_conf) {
                taken.insert(i);
                chosen.push(i);
            }
        } else {
            let n = if strategy == HintStrategy::Random { n_conf + n_hard } else { n_conf };
            take_random(n, &mut chosen, &mut taken);
        }

        let scores = scorer.score_all(user);
        match strategy {
            HintStrategy::Full | HintStrategy::NoConfidence => {
                let mut rest: Vec<ItemId> = (0..scores.len() as u32)
                    .map(ItemId)
                    .filter(|i| eligible(i) && !taken.contains(i))
                    .collect();
                rest.sort_by(|a, b| scores[b.index()].total_cmp(&scores[a.index()]).then(a.cmp(b)));
                chosen.extend(rest.into_iter().take(n_hard));
            }
            HintStrategy::NoHard => take_random(n_hard, &mut chosen, &mut taken),
            HintStrategy::Random => {}
        }

        let entries = chosen
            .into_iter()
            .map(|i| (i, scores[i.index()].clamp(crate::models::CLIP_EPS, 1.0 - crate::models::CLIP_EPS)))
            .collect();
        Ok(HintDataset { user, entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_rounds_confidence_up() {
        let mut c = ServerConfig::default();
        assert_eq!(c.split(), (15, 15));
        c.alpha = 5;
        assert_eq!(c.split(), (3, 2));
        c.mu = 1.0;
        assert_eq!(c.split(), (5, 0));
        c.mu = 0.0;
        assert_eq!(c.split(), (0, 5));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("no-hard".parse::<HintStrategy>().unwrap(), HintStrategy::NoHard);
        assert!("half".parse::<HintStrategy>().is_err());
    }
}
