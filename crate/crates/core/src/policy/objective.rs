//! Self-critical, mixed and model-selection objectives.

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};

/// a_t = r(ŷ_t) − b_t, where b_t is the greedy token reward while t is inside
/// the greedy decode and the greedy mean reward past its end.
pub fn advantages(sampled: &[f64], greedy: &[f64]) -> Vec<f64> {
    let mean = if greedy.is_empty() {
        0.0
    } else {
        greedy.iter().sum::<f64>() / greedy.len() as f64
    };
    sampled
        .iter()
        .enumerate()
        .map(|(t, r)| r - greedy.get(t).copied().unwrap_or(mean))
        .collect()
}

/// L_rl = −Σ_t a_t · log P(ŷ_t).
pub fn self_critical_loss(tape: &mut Tape<'_>, log_probs: &[Var], sampled: &[f64], greedy: &[f64]) -> Result<Var> {
    if log_probs.len() != sampled.len() {
        return Err(Error::LengthMismatch {
            left: log_probs.len(),
            right: sampled.len(),
        });
    }
    let w: Vec<f64> = advantages(sampled, greedy).into_iter().map(|a| -a).collect();
    tape.weighted_sum(log_probs, &w)
}

/// γ · L_rl + (1 − γ) · L_mle.
pub fn mixed_loss(tape: &mut Tape<'_>, l_rl: Var, l_mle: Var, gamma: f64) -> Result<Var> {
    check_gamma(gamma)?;
    tape.weighted_sum(&[l_rl, l_mle], &[gamma, 1.0 - gamma])
}

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::invalid(format!("gamma {gamma} outside [0, 1]")))
    }
}

/// Mean over examples of (r_b4 / T) · Σ_t r_RO(y_t); each example is
/// (BLEU-4 in [0, 1], relative-order token rewards). T = 0 scores 0.
pub fn model_selection_score(examples: &[(f64, Vec<f64>)]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let total: f64 = examples
        .iter()
        .map(|(b4, r)| {
            if r.is_empty() {
                0.0
            } else {
                b4 / r.len() as f64 * r.iter().sum::<f64>()
            }
        })
        .sum();
    Ok(total / examples.len() as f64)
}
