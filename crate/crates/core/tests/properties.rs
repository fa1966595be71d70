use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ptf_fedrec::client::{select_upload_items, swap_scores, UploadPayload};
use ptf_fedrec::domain::{ItemId, TrainedPool, UserId};
use ptf_fedrec::eval::{recall_ndcg, score_guess, top_guess_attack};
use ptf_fedrec::protocol::wire;
use ptf_fedrec::server::HintDataset;

fn entries() -> impl Strategy<Value = Vec<(ItemId, f64)>> {
    prop::collection::vec((any::<u32>(), any::<f64>()), 0..64)
        .prop_map(|v| v.into_iter().map(|(i, s)| (ItemId(i), s)).collect())
}

fn bits(e: &[(ItemId, f64)]) -> Vec<(u32, u64)> {
    e.iter().map(|(i, s)| (i.0, s.to_bits())).collect()
}

proptest! {
    #[test]
    fn upload_round_trip(user in any::<u32>(), entries in entries()) {
        let p = UploadPayload { user: UserId(user), entries };
        let bytes = wire::encode_upload(&p);
        prop_assert_eq!(bytes.len(), 16 + 12 * p.entries.len());
        let back = wire::decode_upload(&bytes).unwrap();
        prop_assert_eq!(back.user, p.user);
        prop_assert_eq!(bits(&back.entries), bits(&p.entries));
    }

    #[test]
    fn hint_round_trip(user in any::<u32>(), entries in entries()) {
        let h = HintDataset { user: UserId(user), entries };
        let back = wire::decode_hint(&wire::encode_hint(&h)).unwrap();
        prop_assert_eq!(back.user, h.user);
        prop_assert_eq!(bits(&back.entries), bits(&h.entries));
    }

    #[test]
    fn truncated_messages_never_decode(entries in entries(), cut in 1usize..16) {
        let bytes = wire::encode_upload(&UploadPayload { user: UserId(1), entries });
        let cut = cut.min(bytes.len());
        prop_assert!(wire::decode_upload(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn sampling_counts(p in 1usize..60, n in 0usize..240, beta in 0.1f64..=1.0, gamma in 1u32..=4, seed in any::<u64>()) {
        let pool = TrainedPool {
            positives: (0..p as u32).map(ItemId).collect(),
            negatives: (1000..1000 + n as u32).map(ItemId).collect(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = select_upload_items(&pool, beta, gamma, &mut rng);
        let n_p = ((beta * p as f64).round() as usize).max(1).min(p);
        prop_assert_eq!(s.positives.len(), n_p);
        prop_assert_eq!(s.negatives.len(), ((gamma as usize * n_p) as f64).round().min(n as f64) as usize);
        let mut pos = s.positives.clone();
        pos.sort();
        pos.dedup();
        prop_assert_eq!(pos.len(), n_p);
        prop_assert!(s.positives.iter().all(|i| pool.positives.contains(i)));
        prop_assert!(s.negatives.iter().all(|i| pool.negatives.contains(i)));
    }

    #[test]
    fn swapping_preserves_the_score_multiset(
        pos in prop::collection::vec(0.0f64..1.0, 1..40),
        neg in prop::collection::vec(0.0f64..1.0, 0..80),
        lambda in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut p: Vec<(ItemId, f64)> = pos.iter().enumerate().map(|(i, &s)| (ItemId(i as u32), s)).collect();
        let mut n: Vec<(ItemId, f64)> = neg.iter().enumerate().map(|(i, &s)| (ItemId(500 + i as u32), s)).collect();
        let mut before: Vec<u64> = p.iter().chain(&n).map(|e| e.1.to_bits()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = swap_scores(&mut p, &mut n, lambda, &mut rng);
        let mut after: Vec<u64> = p.iter().chain(&n).map(|e| e.1.to_bits()).collect();
        before.sort();
        after.sort();
        prop_assert_eq!(before, after);
        prop_assert!(k <= pos.len().div_ceil(2));
        prop_assert!(k <= neg.len());
        // Item ids stay where they were.
        prop_assert!(p.iter().enumerate().all(|(i, e)| e.0 == ItemId(i as u32)));
    }

    #[test]
    fn swapping_never_helps_the_attack_on_separated_payloads(
        n_pos in 2usize..30,
        ratio in 1usize..5,
        lambda in 0.0f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut p: Vec<(ItemId, f64)> = (0..n_pos).map(|i| (ItemId(i as u32), 0.6 + 0.3 * i as f64 / n_pos as f64)).collect();
        let mut n: Vec<(ItemId, f64)> = (0..n_pos * ratio).map(|i| (ItemId(1000 + i as u32), 0.1 + 0.3 * i as f64 / (n_pos * ratio) as f64)).collect();
        let truth: Vec<ItemId> = p.iter().map(|e| e.0).collect();
        let gamma = 1.0 / (1 + ratio) as f64;
        let all = |p: &[(ItemId, f64)], n: &[(ItemId, f64)]| p.iter().chain(n).copied().collect::<Vec<_>>();
        let clean = score_guess(&top_guess_attack(&all(&p, &n), gamma), &truth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = swap_scores(&mut p, &mut n, lambda, &mut rng);
        let swapped = score_guess(&top_guess_attack(&all(&p, &n), gamma), &truth);
        prop_assert!(swapped.recall <= clean.recall + 1e-12);
        if k > 0 {
            // Every swapped positive now carries a negative's score.
            prop_assert!((swapped.recall - (1.0 - k as f64 / n_pos as f64)).abs() < 1e-12);
            prop_assert!(swapped.recall < clean.recall);
        }
    }

    #[test]
    fn attack_ignores_monotone_transforms(scores in prop::collection::vec(0.0f64..1.0, 1..80), n_true in 0usize..80) {
        let payload: Vec<(ItemId, f64)> = scores.iter().enumerate().map(|(i, &s)| (ItemId(i as u32), s)).collect();
        let truth: Vec<ItemId> = (0..n_true.min(scores.len()) as u32).map(ItemId).collect();
        let squashed: Vec<(ItemId, f64)> = payload.iter().map(|&(i, s)| (i, (3.0 * s - 1.0).exp() / 7.0 + 0.01)).collect();
        let a = score_guess(&top_guess_attack(&payload, 0.2), &truth);
        let b = score_guess(&top_guess_attack(&squashed, 0.2), &truth);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pushing_a_hit_below_k_never_improves_metrics(
        len in 2usize..40,
        k in 1usize..30,
        hits in prop::collection::vec(any::<bool>(), 40),
        from in 0usize..40,
    ) {
        let k = k.min(len);
        let ranked: Vec<ItemId> = (0..len as u32).map(ItemId).collect();
        let test: Vec<ItemId> = (0..len).filter(|&i| hits[i]).map(|i| ItemId(i as u32)).collect();
        prop_assume!(!test.is_empty());
        let from = from % len;
        prop_assume!(from < k && hits[from]);
        let mut moved = ranked.clone();
        let item = moved.remove(from);
        moved.push(item);
        let (r0, n0) = recall_ndcg(&ranked, &test, k);
        let (r1, n1) = recall_ndcg(&moved, &test, k);
        prop_assert!(r1 <= r0 + 1e-12);
        prop_assert!(n1 <= n0 + 1e-12);
        prop_assert!((0.0..=1.0).contains(&r0) && (0.0..=1.0 + 1e-12).contains(&n0));
    }
}
