/// Scores are clamped into `[CLIP_EPS, 1 - CLIP_EPS]` before taking logs.
pub const CLIP_EPS: f64 = 1e-7;

pub fn clip(score: f64) -> f64 {
    score.clamp(CLIP_EPS, 1.0 - CLIP_EPS)
}

/// Per-sample binary cross-entropy against a (possibly soft) target.
pub fn bce(score: f64, target: f64) -> f64 {
    let s = clip(score);
    -(target * s.ln() + (1.0 - target) * (1.0 - s).ln())
}

/// Mean binary cross-entropy over a batch. Hard labels {0,1} and soft labels
/// in [0,1] are treated alike.
pub fn bce_loss(scores: &[f64], targets: &[f64]) -> f64 {
    assert_eq!(scores.len(), targets.len(), "scores/targets length mismatch");
    if scores.is_empty() {
        return 0.0;
    }
    scores
        .iter()
        .zip(targets)
        .map(|(&s, &t)| bce(s, t))
        .sum::<f64>()
        / scores.len() as f64
}

/// d bce / d logit for `score = sigmoid(logit)`. Zero inside the clamp
/// region, where the loss is flat.
pub fn bce_logit_grad(score: f64, target: f64) -> f64 {
    if score < CLIP_EPS || score > 1.0 - CLIP_EPS {
        0.0
    } else {
        score - target
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_values() {
        let ln2 = std::f64::consts::LN_2;
        assert!((bce_loss(&[0.5], &[1.0]) - ln2).abs() < 1e-12);
        assert!((bce_loss(&[0.5], &[0.5]) - ln2).abs() < 1e-12);
        // Binary entropy H(0.2) at the matching soft label.
        let h = -(0.2f64 * 0.2f64.ln() + 0.8 * 0.8f64.ln());
        assert!((bce_loss(&[0.2, 0.8], &[0.2, 0.8]) - h).abs() < 1e-12);
        assert!((h - 0.500402).abs() < 1e-6);
    }

    #[test]
    fn clamped_extremes_stay_finite() {
        assert!(bce_loss(&[0.0, 1.0], &[1.0, 0.0]).is_finite());
    }
}
