use serde::{Deserialize, Serialize};

use crate::domain::{InteractionStore, ItemId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: UserId,
    pub recall: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
    #[serde(skip)]
    pub per_user: Vec<UserMetrics>,
}

/// Top-`k` items by (score desc, id asc) among `candidates`.
pub fn top_k(scores: &[f64], candidates: &[ItemId], k: usize) -> Vec<ItemId> {
    let cmp = |a: &ItemId, b: &ItemId| scores[b.index()].total_cmp(&scores[a.index()]).then(a.cmp(b));
    let mut c = candidates.to_vec();
    if c.len() > k && k > 0 {
        c.select_nth_unstable_by(k - 1, cmp);
        c.truncate(k);
    }
    c.sort_by(cmp);
    c.truncate(k);
    c
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Recall and NDCG of one ranked list against a test set (1-based ranks).
pub fn recall_ndcg(ranked: &[ItemId], test: &[ItemId], k: usize) -> (f64, f64) {
    if test.is_empty() {
        return (0.0, 0.0);
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, item) in ranked.iter().take(k).enumerate() {
        if test.contains(item) {
            hits += 1;
            dcg += discount(r + 1);
        }
    }
    let idcg: f64 = (1..=k.min(test.len())).map(discount).sum();
    (hits as f64 / test.len() as f64, dcg / idcg)
}

/// Macro-averaged Recall@k / NDCG@k. Candidates for each user are all items
/// except its train positives; users without test items are skipped.
pub fn rank_eval<F>(score_all: F, store: &InteractionStore, k: usize) -> RankingMetrics
where
    F: Fn(UserId) -> Vec<f64>,
{
    let mut per_user = Vec::new();
    for user in store.evaluable_users() {
        let scores = score_all(user);
        debug_assert_eq!(scores.len(), store.n_items());
        let candidates: Vec<ItemId> = (0..store.n_items() as u32)
            .map(ItemId)
            .filter(|&i| !store.is_train_positive(user, i))
            .collect();
        let ranked = top_k(&scores, &candidates, k);
        let (recall, ndcg) = recall_ndcg(&ranked, store.test(user), k);
        per_user.push(UserMetrics { user, recall, ndcg });
    }
    let n = per_user.len();
    let mean = |f: fn(&UserMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_user.iter().map(f).sum::<f64>() / n as f64
        }
    };
    RankingMetrics {
        k,
        recall: mean(|m| m.recall),
        ndcg: mean(|m| m.ndcg),
        users: n,
        per_user,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ItemId> {
        v.iter().map(|&i| ItemId(i)).collect()
    }

    #[test]
    fn analytic_ndcg() {
        let (r, n) = recall_ndcg(&ids(&[5, 1, 2]), &ids(&[5]), 20);
        assert_eq!((r, n), (1.0, 1.0));
        let (_, n) = recall_ndcg(&ids(&[1, 5, 2]), &ids(&[5]), 20);
        assert!((n - 1.0 / 3f64.log2()).abs() < 1e-12);
        assert!((n - 0.63093).abs() < 1e-5);
    }

    #[test]
    fn all_hits_recall_one() {
        let (r, _) = recall_ndcg(&ids(&[3, 9, 4]), &ids(&[9, 4]), 20);
        assert_eq!(r, 1.0);
    }

    #[test]
    fn top_k_tie_rule() {
        let scores = vec![0.5, 0.9, 0.5, 0.1];
        assert_eq!(top_k(&scores, &ids(&[0, 1, 2, 3]), 3), ids(&[1, 0, 2]));
        assert_eq!(top_k(&scores, &ids(&[3, 2]), 5), ids(&[2, 3]));
    }

    #[test]
    fn candidates_exclude_train_positives() {
        let store = InteractionStore::from_pairs(1, 4, [(UserId(0), ItemId(0)), (UserId(0), ItemId(1))])
            .split_train_test(&Default::default())
            .unwrap();
        let train = store.train(UserId(0))[0];
        // Train item scored highest must not occupy rank 1.
        let m = rank_eval(
            |_| (0..4).map(|i| if ItemId(i) == train { 1.0 } else if store.test(UserId(0)).contains(&ItemId(i)) { 0.9 } else { 0.1 }).collect(),
            &store,
            1,
        );
        assert_eq!((m.recall, m.ndcg, m.users), (1.0, 1.0, 1));
    }
}
