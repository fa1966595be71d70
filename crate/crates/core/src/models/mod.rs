//! The three recommender architectures behind one owned [`ModelState`].
//!
//! Every architecture exposes exact batch gradients so the simulator needs no
//! autodiff; finite-difference checks in the test suite pin them down.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod loss;
pub mod neumf;
pub mod tensor;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ItemId, UserId};
pub use adam::{Adam, AdamConfig};
pub use graph::{Adjacency, GraphKind, GraphModel};
pub use loss::{bce_loss, CLIP_EPS};
pub use neumf::{NeuMf, NeuMfItemCache};
pub use tensor::{Gradient, Param};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    NeuMf,
    Ngcf,
    LightGcn,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::NeuMf, Architecture::Ngcf, Architecture::LightGcn];

    pub fn tag(self) -> u8 {
        match self {
            Architecture::NeuMf => 0,
            Architecture::Ngcf => 1,
            Architecture::LightGcn => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.tag() == tag)
    }

    pub fn is_graph(self) -> bool {
        !matches!(self, Architecture::NeuMf)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Architecture::NeuMf => "neumf",
            Architecture::Ngcf => "ngcf",
            Architecture::LightGcn => "lightgcn",
        })
    }
}

impl FromStr for Architecture {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "neumf" | "ncf" => Ok(Architecture::NeuMf),
            "ngcf" => Ok(Architecture::Ngcf),
            "lightgcn" => Ok(Architecture::LightGcn),
            other => Err(format!("unknown architecture `{other}` (neumf, ngcf, lightgcn)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    /// NeuMF hidden layer widths.
    pub hidden: Vec<usize>,
    /// Propagation depth for the graph models.
    pub graph_layers: usize,
    pub adam: AdamConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            hidden: vec![64, 32, 16],
            graph_layers: 3,
            adam: AdamConfig::default(),
        }
    }
}

/// One training example; `target` is a hard label or a soft score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub user: UserId,
    pub item: ItemId,
    pub target: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("user {user} out of range (model has {n_users} users)")]
    UserOutOfRange { user: UserId, n_users: usize },
    #[error("item {item} out of range (model has {n_items} items)")]
    ItemOutOfRange { item: ItemId, n_items: usize },
    #[error("graph embeddings are stale; propagate before predicting")]
    StaleEmbeddings,
    #[error("empty training batch")]
    EmptyBatch,
    #[error("training diverged: loss {loss} after {steps} optimizer steps")]
    Diverged { loss: f64, steps: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone)]
enum Network {
    NeuMf(NeuMf),
    Graph(GraphModel),
}

/// A model exclusively owned by one participant: parameters, optimizer state
/// and (server side) per-item update counters.
#[derive(Debug, Clone)]
pub struct ModelState {
    arch: Architecture,
    config: ModelConfig,
    net: Network,
    adam: Adam,
    item_updates: Option<Vec<u64>>,
}

impl ModelState {
    pub fn new<R: Rng + ?Sized>(
        arch: Architecture,
        n_users: usize,
        n_items: usize,
        config: &ModelConfig,
        rng: &mut R,
    ) -> Self {
        let net = match arch {
            Architecture::NeuMf => Network::NeuMf(NeuMf::new(n_users, n_items, config.dim, &config.hidden, rng)),
            Architecture::Ngcf | Architecture::LightGcn => {
                let kind = if arch == Architecture::Ngcf {
                    GraphKind::Ngcf
                } else {
                    GraphKind::LightGcn
                };
                Network::Graph(GraphModel::new(kind, n_users, n_items, config.dim, config.graph_layers, rng))
            }
        };
        Self::from_network(arch, config.clone(), net)
    }

    fn from_network(arch: Architecture, config: ModelConfig, net: Network) -> Self {
        let adam = Adam::new(
            config.adam,
            match &net {
                Network::NeuMf(m) => &m.params,
                Network::Graph(g) => &g.params,
            },
        );
        Self {
            arch,
            config,
            net,
            adam,
            item_updates: None,
        }
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn n_users(&self) -> usize {
        self.params()[0].rows
    }

    pub fn n_items(&self) -> usize {
        self.params()[1].rows
    }

    pub fn params(&self) -> &[Param] {
        match &self.net {
            Network::NeuMf(m) => &m.params,
            Network::Graph(g) => &g.params,
        }
    }

    /// Mutable parameter access; invalidates any cached propagation.
    pub fn params_mut(&mut self) -> &mut [Param] {
        match &mut self.net {
            Network::NeuMf(m) => &mut m.params,
            Network::Graph(g) => {
                g.invalidate();
                &mut g.params
            }
        }
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step_count()
    }

    pub fn graph(&self) -> Option<&GraphModel> {
        match &self.net {
            Network::Graph(g) => Some(g),
            Network::NeuMf(_) => None,
        }
    }

    /// Replace the interaction graph (graph architectures only; NeuMF
    /// ignores it).
    pub fn set_graph_edges(&mut self, edges: impl IntoIterator<Item = (UserId, ItemId)>) {
        if let Network::Graph(g) = &mut self.net {
            let adj = Adjacency::from_edges(
                g.n_users(),
                g.n_items(),
                edges.into_iter().map(|(u, i)| (u.index(), i.index())),
            );
            g.set_adjacency(adj);
        }
    }

    /// Materialize final embeddings. No-op for NeuMF.
    pub fn propagate(&mut self) {
        if let Network::Graph(g) = &mut self.net {
            g.propagate();
        }
    }

    pub fn is_ready(&self) -> bool {
        match &self.net {
            Network::NeuMf(_) => true,
            Network::Graph(g) => g.is_propagated(),
        }
    }

    /// Start counting, per item, the training batches it appears in.
    pub fn enable_item_counters(&mut self) {
        if self.item_updates.is_none() {
            self.item_updates = Some(vec![0; self.n_items()]);
        }
    }

    pub fn item_updates(&self) -> Option<&[u64]> {
        self.item_updates.as_deref()
    }

    fn check_ids(&self, user: UserId, item: ItemId) -> Result<(), ModelError> {
        if user.index() >= self.n_users() {
            return Err(ModelError::UserOutOfRange {
                user,
                n_users: self.n_users(),
            });
        }
        if item.index() >= self.n_items() {
            return Err(ModelError::ItemOutOfRange {
                item,
                n_items: self.n_items(),
            });
        }
        Ok(())
    }

    /// Scores in (0,1) for each pair.
    pub fn predict(&self, pairs: &[(UserId, ItemId)]) -> Result<Vec<f64>, ModelError> {
        for &(u, i) in pairs {
            self.check_ids(u, i)?;
        }
        let idx: Vec<(usize, usize)> = pairs.iter().map(|(u, i)| (u.index(), i.index())).collect();
        let scores = match &self.net {
            Network::NeuMf(m) => m.predict_pairs(&idx),
            Network::Graph(g) => g.predict_pairs(&idx).ok_or(ModelError::StaleEmbeddings)?,
        };
        Ok(scores.into_iter().map(loss::clip).collect())
    }

    pub fn predict_items(&self, user: UserId, items: &[ItemId]) -> Result<Vec<f64>, ModelError> {
        let pairs: Vec<_> = items.iter().map(|&i| (user, i)).collect();
        self.predict(&pairs)
    }

    /// A scorer for ranking users against the whole catalogue.
    pub fn catalogue_scorer(&self) -> Result<CatalogueScorer<'_>, ModelError> {
        match &self.net {
            Network::NeuMf(m) => Ok(CatalogueScorer::NeuMf(m, m.item_cache())),
            Network::Graph(g) if g.is_propagated() => Ok(CatalogueScorer::Graph(g)),
            Network::Graph(_) => Err(ModelError::StaleEmbeddings),
        }
    }

    pub fn loss_and_grad(&self, batch: &[Sample]) -> Result<(f64, Vec<Option<Gradient>>), ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for s in batch {
            self.check_ids(s.user, s.item)?;
        }
        let idx = neumf::as_index_batch(batch);
        Ok(match &self.net {
            Network::NeuMf(m) => m.loss_and_grad(&idx),
            Network::Graph(g) => g.loss_and_grad(&idx),
        })
    }

    /// One Adam step on the batch-mean loss. Returns the pre-step loss.
    pub fn train_batch(&mut self, batch: &[Sample]) -> Result<f64, ModelError> {
        let (loss, grads) = self.loss_and_grad(batch)?;
        if !loss.is_finite() {
            return Err(ModelError::Diverged {
                loss,
                steps: self.adam.step_count(),
            });
        }
        match &mut self.net {
            Network::NeuMf(m) => self.adam.step(&mut m.params, &grads),
            Network::Graph(g) => {
                self.adam.step(&mut g.params, &grads);
                g.invalidate();
            }
        }
        if let Some(counters) = &mut self.item_updates {
            let mut items: Vec<ItemId> = batch.iter().map(|s| s.item).collect();
            items.sort_unstable();
            items.dedup();
            for i in items {
                counters[i.index()] += 1;
            }
        }
        Ok(loss)
    }

    pub(crate) fn parts(&self) -> (Architecture, &ModelConfig, &[Param]) {
        (self.arch, &self.config, self.params())
    }

    pub(crate) fn from_parts(arch: Architecture, config: ModelConfig, params: Vec<Param>) -> Result<Self, ModelError> {
        let mut rng = rand::rngs::mock::StepRng::new(0, 0);
        let (n_users, n_items) = (params.first().map_or(0, |p| p.rows), params.get(1).map_or(0, |p| p.rows));
        let mut state = Self::new(arch, n_users, n_items, &config, &mut rng);
        let expected: Vec<(usize, usize)> = state.params().iter().map(|p| (p.rows, p.cols)).collect();
        let got: Vec<(usize, usize)> = params.iter().map(|p| (p.rows, p.cols)).collect();
        if expected != got {
            return Err(ModelError::Checkpoint(format!(
                "tensor shapes {got:?} do not match {arch} layout {expected:?}"
            )));
        }
        state.params_mut().clone_from_slice(&params);
        state.adam = Adam::new(config.adam, state.params());
        Ok(state)
    }
}

/// Ranks one user against every item.
pub enum CatalogueScorer<'a> {
    NeuMf(&'a NeuMf, NeuMfItemCache),
    Graph(&'a GraphModel),
}

impl CatalogueScorer<'_> {
    pub fn score_all(&self, user: UserId) -> Vec<f64> {
        match self {
            CatalogueScorer::NeuMf(m, cache) => m.score_all_items(user.index(), cache),
            CatalogueScorer::Graph(g) => g.score_all_items(user.index()).expect("propagated"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample(u: u32, i: u32, t: f64) -> Sample {
        Sample {
            user: UserId(u),
            item: ItemId(i),
            target: t,
        }
    }

    #[test]
    fn out_of_range_ids_are_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ModelState::new(Architecture::NeuMf, 2, 3, &ModelConfig::default(), &mut rng);
        assert!(matches!(
            m.predict(&[(UserId(2), ItemId(0))]),
            Err(ModelError::UserOutOfRange { .. })
        ));
        assert!(matches!(
            m.predict(&[(UserId(0), ItemId(3))]),
            Err(ModelError::ItemOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ModelState::new(Architecture::LightGcn, 2, 3, &ModelConfig::default(), &mut rng);
        assert!(matches!(m.train_batch(&[]), Err(ModelError::EmptyBatch)));
    }

    #[test]
    fn counters_count_batches_not_occurrences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ModelState::new(Architecture::NeuMf, 2, 4, &ModelConfig::default(), &mut rng);
        m.enable_item_counters();
        m.train_batch(&[sample(0, 1, 1.0), sample(1, 1, 0.0), sample(0, 2, 0.3)]).unwrap();
        m.train_batch(&[sample(1, 2, 0.7)]).unwrap();
        assert_eq!(m.item_updates().unwrap(), &[0, 1, 2, 0]);
        assert_eq!(m.step_count(), 2);
    }

    #[test]
    fn single_pair_is_learned() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut m = ModelState::new(Architecture::NeuMf, 1, 2, &ModelConfig::default(), &mut rng);
        let batch = [sample(0, 1, 1.0)];
        let mut last = f64::INFINITY;
        for _ in 0..200 {
            let loss = m.train_batch(&batch).unwrap();
            assert!(loss <= last + 1e-12);
            last = loss;
        }
        assert!(m.predict(&[(UserId(0), ItemId(1))]).unwrap()[0] > 0.9);
    }

    #[test]
    fn graph_predict_requires_propagation() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut m = ModelState::new(Architecture::Ngcf, 2, 3, &ModelConfig::default(), &mut rng);
        m.set_graph_edges([(UserId(0), ItemId(1))]);
        assert!(matches!(
            m.predict(&[(UserId(0), ItemId(0))]),
            Err(ModelError::StaleEmbeddings)
        ));
        m.propagate();
        assert!(m.predict(&[(UserId(0), ItemId(0))]).is_ok());
        m.train_batch(&[sample(0, 1, 1.0)]).unwrap();
        assert!(!m.is_ready());
    }
}
