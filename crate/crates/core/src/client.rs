//! Client-side round logic: local training on private plus hinted data, and
//! construction of the privacy-preserving upload.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{InteractionStore, ItemId, TrainedPool, UserId};
use crate::models::{Architecture, ModelConfig, ModelError, ModelState, Sample, CLIP_EPS};
use crate::rng::{Purpose, SeedStream};

/// Local user index inside a client's own model.
const LOCAL_USER: UserId = UserId(0);

/// How a client protects its upload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Defense {
    /// Upload predictions for the whole trained pool.
    None,
    /// Whole pool with Laplace noise of the given scale on every score.
    Ldp { scale: f64 },
    /// Random positive share and negative multiplier per round.
    Sampling,
    /// Sampling followed by score swapping.
    SamplingSwapping,
}

impl Defense {
    pub fn samples(&self) -> bool {
        matches!(self, Defense::Sampling | Defense::SamplingSwapping)
    }

    pub fn label(&self) -> String {
        match self {
            Defense::None => "none".into(),
            Defense::Ldp { scale } => format!("ldp({scale})"),
            Defense::Sampling => "sampling".into(),
            Defense::SamplingSwapping => "sampling+swapping".into(),
        }
    }
}

impl std::str::FromStr for Defense {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(inner) = s.strip_prefix("ldp(").and_then(|r| r.strip_suffix(')')) {
            let scale: f64 = inner.parse().map_err(|_| format!("bad LDP scale `{inner}`"))?;
            if scale <= 0.0 {
                return Err("LDP scale must be > 0".into());
            }
            return Ok(Defense::Ldp { scale });
        }
        match s.as_str() {
            "none" => Ok(Defense::None),
            "ldp" => Ok(Defense::Ldp { scale: 0.1 }),
            "sampling" => Ok(Defense::Sampling),
            "sampling+swapping" | "sampling-swapping" | "swapping" => Ok(Defense::SamplingSwapping),
            other => Err(format!("unknown defense `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub negative_ratio: usize,
    /// Inclusive draw range for the positive share β.
    pub beta_range: (f64, f64),
    /// Inclusive integer draw range for the negative multiplier γ.
    pub gamma_range: (u32, u32),
    /// Swap probability λ.
    pub swap_prob: f64,
    pub defense: Defense,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            batch_size: 64,
            negative_ratio: 4,
            beta_range: (0.1, 1.0),
            gamma_range: (1, 4),
            swap_prob: 0.1,
            defense: Defense::SamplingSwapping,
        }
    }
}

/// Prediction triples a client sends to the server. Entries are sorted by
/// item id so their order reveals nothing about labels.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadPayload {
    pub user: UserId,
    pub entries: Vec<(ItemId, f64)>,
}

impl UploadPayload {
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

/// The items chosen for upload this round, with the knobs that chose them.
#[derive(Debug, Clone, PartialEq)]
pub struct UploadSelection {
    pub positives: Vec<ItemId>,
    pub negatives: Vec<ItemId>,
    pub beta: f64,
    pub gamma: u32,
}

impl UploadSelection {
    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Pick `max(1, round(β·P))` positives and `min(round(γ·n_p), N)` negatives
/// uniformly from the pool.
pub fn select_upload_items<R: Rng + ?Sized>(pool: &TrainedPool, beta: f64, gamma: u32, rng: &mut R) -> UploadSelection {
    let p = pool.positives.len();
    let n_p = ((beta * p as f64).round() as usize).max(1).min(p);
    let n_n = ((gamma as f64 * n_p as f64).round() as usize).min(pool.negatives.len());
    let positives = pool.positives.choose_multiple(rng, n_p).copied().collect();
    let negatives = pool.negatives.choose_multiple(rng, n_n).copied().collect();
    UploadSelection {
        positives,
        negatives,
        beta,
        gamma,
    }
}

/// Exchange the scores of `round(λ·n_p)` positives drawn from the top-scored
/// half with those of as many distinct random negatives. Returns the number
/// of swapped pairs. The multiset of scores is unchanged.
pub fn swap_scores<R: Rng + ?Sized>(
    positives: &mut [(ItemId, f64)],
    negatives: &mut [(ItemId, f64)],
    swap_prob: f64,
    rng: &mut R,
) -> usize {
    let n_p = positives.len();
    if n_p == 0 || negatives.is_empty() || swap_prob <= 0.0 {
        return 0;
    }
    let mut order: Vec<usize> = (0..n_p).collect();
    order.sort_by(|&a, &b| {
        positives[b]
            .1
            .total_cmp(&positives[a].1)
            .then(positives[a].0.cmp(&positives[b].0))
    });
    let top = &order[..n_p.div_ceil(2)];
    let k = ((swap_prob * n_p as f64).round() as usize)
        .min(top.len())
        .min(negatives.len());
    let donors: Vec<usize> = top.choose_multiple(rng, k).copied().collect();
    let takers = rand::seq::index::sample(rng, negatives.len(), k).into_vec();
    for (&pi, &ni) in donors.iter().zip(&takers) {
        std::mem::swap(&mut positives[pi].1, &mut negatives[ni].1);
    }
    k
}

/// Add Laplace(0, scale) noise to every score and clamp back into (0,1).
pub fn ldp_perturb<R: Rng + ?Sized>(payload: &UploadPayload, scale: f64, rng: &mut R) -> UploadPayload {
    assert!(scale > 0.0, "Laplace scale must be positive");
    let entries = payload
        .entries
        .iter()
        .map(|&(item, s)| (item, (s + laplace(scale, rng)).clamp(CLIP_EPS, 1.0 - CLIP_EPS)))
        .collect();
    UploadPayload {
        user: payload.user,
        entries,
    }
}

/// Inverse-CDF Laplace draw.
pub fn laplace<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.gen_range(-0.5..0.5);
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One federated participant.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub user: UserId,
    pub model: ModelState,
    pub pool: TrainedPool,
    /// Latest server hint; replaced on every receipt.
    pub hint: Vec<(ItemId, f64)>,
    pub config: ClientConfig,
    seeds: SeedStream,
}

impl ClientState {
    pub fn new(
        user: UserId,
        arch: Architecture,
        store: &InteractionStore,
        model_config: &ModelConfig,
        config: ClientConfig,
        seeds: SeedStream,
    ) -> Self {
        let mut rng = seeds.rng(Purpose::ClientInit, user.0 as u64, 0);
        let mut model = ModelState::new(arch, 1, store.n_items(), model_config, &mut rng);
        model.set_graph_edges(store.train(user).iter().map(|&i| (LOCAL_USER, i)));
        model.propagate();
        Self {
            user,
            model,
            pool: TrainedPool::default(),
            hint: Vec::new(),
            config,
            seeds,
        }
    }

    pub fn resample_pool(&mut self, store: &InteractionStore, round: usize) {
        let mut rng = self.seeds.rng(Purpose::NegativePool, self.user.0 as u64, round as u64);
        self.pool = store.resample_trained_pool(self.user, self.config.negative_ratio, &mut rng);
    }

    /// Samples for one local epoch: the trained pool with hard labels followed
    /// by the cached hint with soft labels.
    pub fn training_samples(&self) -> Vec<Sample> {
        self.pool
            .labelled()
            .map(|(item, label)| (item, label.target()))
            .chain(self.hint.iter().copied())
            .map(|(item, target)| Sample {
                user: LOCAL_USER,
                item,
                target,
            })
            .collect()
    }

    /// `epochs` passes of shuffled mini-batches; returns the final epoch's
    /// mean loss.
    pub fn local_train(&mut self, round: usize) -> Result<f64, ModelError> {
        let mut samples = self.training_samples();
        let mut rng = self.seeds.rng(Purpose::ClientShuffle, self.user.0 as u64, round as u64);
        let mut epoch_loss = 0.0;
        for _ in 0..self.config.epochs {
            samples.shuffle(&mut rng);
            let mut total = 0.0;
            for batch in samples.chunks(self.config.batch_size) {
                total += self.model.train_batch(batch)? * batch.len() as f64;
            }
            epoch_loss = total / samples.len().max(1) as f64;
        }
        self.model.propagate();
        Ok(epoch_loss)
    }

    /// Choose this round's upload items according to the defense.
    pub fn sample_upload_items(&self, round: usize) -> UploadSelection {
        if !self.config.defense.samples() {
            return UploadSelection {
                positives: self.pool.positives.clone(),
                negatives: self.pool.negatives.clone(),
                beta: 1.0,
                gamma: self.config.negative_ratio as u32,
            };
        }
        let mut rng = self.seeds.rng(Purpose::UploadSampling, self.user.0 as u64, round as u64);
        let (lo, hi) = self.config.beta_range;
        let beta = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let (glo, ghi) = self.config.gamma_range;
        let gamma = rng.gen_range(glo..=ghi);
        select_upload_items(&self.pool, beta, gamma, &mut rng)
    }

    /// Score the selection with the local model and apply the defense.
    pub fn build_upload(&self, selection: &UploadSelection, round: usize) -> Result<UploadPayload, ModelError> {
        let score = |items: &[ItemId]| -> Result<Vec<(ItemId, f64)>, ModelError> {
            let s = self.model.predict_items(LOCAL_USER, items)?;
            Ok(items.iter().copied().zip(s).collect())
        };
        let mut pos = score(&selection.positives)?;
        let mut neg = score(&selection.negatives)?;
        if self.config.defense == Defense::SamplingSwapping {
            let mut rng = self.seeds.rng(Purpose::Swap, self.user.0 as u64, round as u64);
            swap_scores(&mut pos, &mut neg, self.config.swap_prob, &mut rng);
        }
        let mut entries = pos;
        entries.extend(neg);
        entries.sort_by_key(|e| e.0);
        let payload = UploadPayload {
            user: self.user,
            entries,
        };
        Ok(match self.config.defense {
            Defense::Ldp { scale } => {
                let mut rng = self.seeds.rng(Purpose::Ldp, self.user.0 as u64, round as u64);
                ldp_perturb(&payload, scale, &mut rng)
            }
            _ => payload,
        })
    }

    /// Cache a server hint, dropping items that are already local train
    /// positives (private labels take precedence).
    pub fn receive_hint(&mut self, entries: &[(ItemId, f64)], store: &InteractionStore) {
        self.hint = entries
            .iter()
            .copied()
            .filter(|&(item, _)| !store.is_train_positive(self.user, item))
            .collect();
    }

    /// Resample, train and build the upload for one round.
    pub fn run_round(&mut self, store: &InteractionStore, round: usize) -> Result<ClientRound, ModelError> {
        self.resample_pool(store, round);
        let loss = self.local_train(round)?;
        let selection = self.sample_upload_items(round);
        let payload = self.build_upload(&selection, round)?;
        Ok(ClientRound {
            loss,
            selection,
            payload,
        })
    }
}

#[derive(Debug, Clone)]
pub struct ClientRound {
    pub loss: f64,
    pub selection: UploadSelection,
    pub payload: UploadPayload,
}
