//! Ranking metrics, the top-guess inference attack, defense tradeoff scoring
//! and synthetic planted-structure instances.

pub mod attack;
pub mod metrics;
pub mod planted;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{InteractionStore, UserId};
use crate::models::{ModelError, ModelState};
use crate::rng::{Purpose, SeedStream};

pub use attack::{attack_report, score_guess, top_guess_attack, AttackOutcome, AttackReport};
pub use metrics::{rank_eval, recall_ndcg, top_k, RankingMetrics, UserMetrics};
pub use planted::{make_planted_instance, PlantedConfig};

/// Rank every evaluable user against the catalogue with a trained model.
pub fn rank_eval_model(model: &ModelState, store: &InteractionStore, k: usize) -> Result<RankingMetrics, ModelError> {
    let scorer = model.catalogue_scorer()?;
    Ok(rank_eval(|u| scorer.score_all(u), store, k))
}

/// Uniformly random scores, reproducible per user.
pub fn random_scorer(n_items: usize, seed: u64) -> impl Fn(UserId) -> Vec<f64> {
    let seeds = SeedStream::new(seed);
    move |u| {
        let mut rng = seeds.rng(Purpose::Eval, u.0 as u64, 0);
        (0..n_items).map(|_| rng.gen::<f64>()).collect()
    }
}

/// ΔF1 / ΔNDCG between an undefended and a defended arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tradeoff {
    Ratio(f64),
    /// Attack got worse while utility did not drop.
    Unbounded,
}

impl Tradeoff {
    pub fn value(&self) -> f64 {
        match self {
            Tradeoff::Ratio(r) => *r,
            Tradeoff::Unbounded => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Tradeoff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tradeoff::Ratio(r) => write!(f, "{r:.1}"),
            Tradeoff::Unbounded => f.write_str("inf"),
        }
    }
}

/// `(F1_undef − F1_def) / (NDCG_undef − NDCG_def)`.
pub fn tradeoff(f1_undefended: f64, ndcg_undefended: f64, f1_defended: f64, ndcg_defended: f64) -> Tradeoff {
    let d_f1 = f1_undefended - f1_defended;
    let d_ndcg = ndcg_undefended - ndcg_defended;
    if d_f1 == 0.0 {
        Tradeoff::Ratio(0.0)
    } else if d_ndcg <= 0.0 {
        Tradeoff::Unbounded
    } else {
        Tradeoff::Ratio(d_f1 / d_ndcg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tradeoff_cases() {
        let t = tradeoff(0.9836, 0.1909, 0.4536, 0.1775);
        assert!((t.value() - 39.55).abs() < 0.1, "{t}");
        assert_eq!(tradeoff(0.5, 0.2, 0.5, 0.2), Tradeoff::Ratio(0.0));
        assert_eq!(tradeoff(0.9, 0.2, 0.5, 0.2), Tradeoff::Unbounded);
        assert_eq!(Tradeoff::Unbounded.to_string(), "inf");
    }
}
