//! Top Guess Attack: a curious server labels the highest-scored fraction of a
//! client's upload as that client's positives.

use serde::{Deserialize, Serialize};

use crate::domain::{ItemId, UserId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub gamma: f64,
    /// Scored against the positives present in each upload.
    pub macro_f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    /// Scored against every positive of the client's trained pool, uploaded
    /// or not.
    pub macro_f1_all_positives: f64,
    pub clients: usize,
    #[serde(skip)]
    pub per_client: Vec<(UserId, AttackOutcome)>,
}

/// Items with the top `round(gamma · |payload|)` scores (ties by item id).
pub fn top_guess_attack(entries: &[(ItemId, f64)], gamma: f64) -> Vec<ItemId> {
    let n = (gamma * entries.len() as f64).round() as usize;
    let mut sorted = entries.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    sorted.into_iter().take(n).map(|e| e.0).collect()
}

pub fn score_guess(guessed: &[ItemId], truth: &[ItemId]) -> AttackOutcome {
    let hits = guessed.iter().filter(|g| truth.contains(g)).count() as f64;
    let precision = if guessed.is_empty() { 0.0 } else { hits / guessed.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    AttackOutcome {
        precision,
        recall,
        f1: f1(precision, recall),
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Macro-average over clients of the attack against each upload. `truth`
/// returns whether an uploaded item is one of the client's real positives;
/// `n_positives` is the size of the client's whole positive set.
pub fn attack_report<'a, I, T, N>(uploads: I, gamma: f64, truth: T, n_positives: N) -> AttackReport
where
    I: IntoIterator<Item = (UserId, &'a [(ItemId, f64)])>,
    T: Fn(UserId, ItemId) -> bool,
    N: Fn(UserId) -> usize,
{
    let mut f1_all = 0.0;
    let per_client: Vec<(UserId, AttackOutcome)> = uploads
        .into_iter()
        .filter(|(_, e)| !e.is_empty())
        .map(|(user, entries)| {
            let positives: Vec<ItemId> = entries.iter().map(|e| e.0).filter(|&i| truth(user, i)).collect();
            let guessed = top_guess_attack(entries, gamma);
            let o = score_guess(&guessed, &positives);
            let hits = o.precision * guessed.len() as f64;
            let total = n_positives(user).max(positives.len());
            let recall_all = if total == 0 { 0.0 } else { hits / total as f64 };
            f1_all += f1(o.precision, recall_all);
            (user, o)
        })
        .collect();
    let n = per_client.len().max(1) as f64;
    let avg = |f: fn(&AttackOutcome) -> f64| per_client.iter().map(|(_, o)| f(o)).sum::<f64>() / n;
    AttackReport {
        gamma,
        macro_f1: avg(|o| o.f1),
        macro_precision: avg(|o| o.precision),
        macro_recall: avg(|o| o.recall),
        macro_f1_all_positives: f1_all / n,
        clients: per_client.len(),
        per_client,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn payload(pos: u32, neg: u32) -> (Vec<(ItemId, f64)>, Vec<ItemId>) {
        let mut e: Vec<_> = (0..pos).map(|i| (ItemId(i), 0.9 - i as f64 * 1e-3)).collect();
        e.extend((0..neg).map(|i| (ItemId(100 + i), 0.1)));
        (e, (0..pos).map(ItemId).collect())
    }

    #[test]
    fn perfect_separation_at_matching_ratio() {
        let (e, truth) = payload(10, 40);
        let o = score_guess(&top_guess_attack(&e, 0.2), &truth);
        assert_eq!(o.f1, 1.0);
    }

    #[test]
    fn mismatched_ratio_caps_f1() {
        let (e, truth) = payload(25, 25);
        let o = score_guess(&top_guess_attack(&e, 0.2), &truth);
        assert_eq!(o.precision, 1.0);
        assert!((o.recall - 0.4).abs() < 1e-12);
        assert!((o.f1 - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn partial_upload_scopes_differ() {
        // 5 of the client's 20 positives uploaded with 20 negatives, perfectly
        // separated: the top 5 guesses are exactly the uploaded positives.
        let (e, _) = payload(5, 20);
        let r = attack_report([(UserId(0), e.as_slice())], 0.2, |_, i| i.0 < 100, |_| 20);
        assert_eq!(r.macro_f1, 1.0);
        assert!((r.macro_f1_all_positives - 0.4).abs() < 1e-12);
    }

    #[test]
    fn empty_guess_scores_zero() {
        let o = score_guess(&[], &[ItemId(1)]);
        assert_eq!(o.f1, 0.0);
    }
}
