use rand::Rng;

use crate::domain::{InteractionStore, ItemId, UserId};
use crate::rng::{Purpose, SeedStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub in_prob: f64,
    pub cross_prob: f64,
    pub seed: u64,
}

impl PlantedConfig {
    pub fn new(users: usize, items: usize, clusters: usize, seed: u64) -> Self {
        Self {
            users,
            items,
            clusters,
            in_prob: 0.8,
            cross_prob: 0.02,
            seed,
        }
    }

    pub fn user_cluster(&self, u: UserId) -> usize {
        u.index() / (self.users / self.clusters)
    }

    pub fn item_cluster(&self, i: ItemId) -> usize {
        i.index() / (self.items / self.clusters)
    }
}

/// Block-structured positives: users in cluster c pick items of cluster c
/// with `in_prob` and every other item with `cross_prob`. A user left with no
/// positives gets the first item of its own block.
pub fn make_planted_instance(cfg: &PlantedConfig) -> InteractionStore {
    assert!(cfg.clusters >= 1, "need at least one cluster");
    assert!(
        cfg.users % cfg.clusters == 0 && cfg.items % cfg.clusters == 0,
        "clusters must divide users and items"
    );
    let seeds = SeedStream::new(cfg.seed);
    let block = cfg.items / cfg.clusters;
    let mut pairs = Vec::new();
    for u in 0..cfg.users as u32 {
        let user = UserId(u);
        let c = cfg.user_cluster(user);
        let mut rng = seeds.rng(Purpose::Planted, u as u64, 0);
        let before = pairs.len();
        for i in 0..cfg.items as u32 {
            let p = if cfg.item_cluster(ItemId(i)) == c { cfg.in_prob } else { cfg.cross_prob };
            if rng.gen_bool(p) {
                pairs.push((user, ItemId(i)));
            }
        }
        if pairs.len() == before {
            pairs.push((user, ItemId((c * block) as u32)));
        }
    }
    InteractionStore::from_pairs(cfg.users, cfg.items, pairs)
}
