//! Group-standardized advantages and the clipped surrogate objective.
//!
//! Rewards standardize within a group of G rollouts (population standard
//! deviation, divide by G). The objective is the clipped token-level
//! surrogate with the rollout advantage broadcast to tokens through the
//! loss mask, summed over tokens and averaged over G - no KL term, no
//! entropy term, no length normalization. Gradients are reported with
//! respect to the supplied new log-probabilities; parameter updates are an
//! external backend's job.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default epsilon added to the group standard deviation.
pub const DEFAULT_EPSILON_STD: f64 = 1e-6;

/// Default clip range. The high side widens per the higher-clipping variant;
/// the low side keeps the conventional PPO value.
pub const DEFAULT_CLIP_LOW: f64 = 0.2;
pub const DEFAULT_CLIP_HIGH: f64 = 0.28;

/// Standardized advantages for one rollout group:
/// `A_i = (r_i - mean) / (std + epsilon)` with population std.
///
/// A zero-variance group (all rewards equal) yields exactly zero advantages.
pub fn group_advantages(rewards: &[f64], epsilon_std: f64) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let all_equal = rewards.windows(2).all(|w| w[0] == w[1]);
    if all_equal {
        return vec![0.0; rewards.len()];
    }
    let g = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / g;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / g;
    let std = var.sqrt();
    rewards.iter().map(|r| (r - mean) / (std + epsilon_std)).collect()
}

/// Per-rollout token arrays feeding the objective. The four arrays share
/// one length; masked positions contribute nothing regardless of their
/// logprob filler values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatchRollout {
    pub token_stream: Vec<u32>,
    /// 1 on agent-generated tokens, 0 on prompt and tool-response tokens.
    pub loss_mask: Vec<u8>,
    /// Log-probabilities under the behavior policy that generated the
    /// rollout.
    pub old_logprobs: Vec<f64>,
    /// Log-probabilities of the same tokens under the current policy.
    pub new_logprobs: Vec<f64>,
    /// Group-standardized advantage for this rollout.
    pub advantage: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoBatch {
    pub rollouts: Vec<BatchRollout>,
    pub clip_low: f64,
    pub clip_high: f64,
    /// Off by default: the objective sums over tokens exactly as written.
    /// When set, each rollout's token sum is divided by its unmasked token
    /// count before averaging over the group.
    #[serde(default)]
    pub per_token_mean: bool,
}

/// Objective value plus per-token diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoOutcome {
    /// The surrogate objective J (to be maximized); the loss is -J.
    pub j_value: f64,
    /// Per-token negated contribution, already scaled by 1/G; sums to -J.
    pub per_token_loss: Vec<Vec<f64>>,
    /// dJ/d(new_logprob) per token: `rho * A_hat / G` where the unclipped
    /// branch is active, 0 where clipped, exactly 0 on masked tokens.
    pub grad_new_logprobs: Vec<Vec<f64>>,
    /// Fraction of unmasked tokens whose clipped branch was strictly lower.
    pub clip_fraction: f64,
    /// Unmasked token count across the batch.
    pub active_tokens: usize,
}

/// Evaluates the clipped surrogate objective over a batch.
///
/// Per token: `rho = exp(new - old)`, `A_hat = mask * A_i`, and the
/// contribution is `min(rho * A_hat, clamp(rho, 1-clip_low, 1+clip_high) * A_hat)`.
/// J sums contributions over tokens and divides by the rollout count.
pub fn grpo_objective(batch: &GrpoBatch) -> Result<GrpoOutcome> {
    if batch.rollouts.is_empty() {
        return Err(Error::Validation("empty GRPO batch".into()));
    }
    for (i, r) in batch.rollouts.iter().enumerate() {
        let n = r.token_stream.len();
        if r.loss_mask.len() != n || r.old_logprobs.len() != n || r.new_logprobs.len() != n {
            return Err(Error::Validation(format!(
                "rollout {i}: token arrays are misaligned ({n} tokens, {} mask, {} old, {} new)",
                r.loss_mask.len(),
                r.old_logprobs.len(),
                r.new_logprobs.len()
            )));
        }
        for t in 0..n {
            if r.loss_mask[t] != 0 {
                let (old, new) = (r.old_logprobs[t], r.new_logprobs[t]);
                if !(old.is_finite() && new.is_finite() && old <= 0.0 && new <= 0.0) {
                    return Err(Error::Validation(format!(
                        "rollout {i} token {t}: logprobs must be finite and <= 0 (old={old}, new={new})"
                    )));
                }
            }
        }
    }

    let g = batch.rollouts.len() as f64;
    let lo = 1.0 - batch.clip_low;
    let hi = 1.0 + batch.clip_high;

    let mut sum = 0.0_f64;
    let mut clipped = 0usize;
    let mut active = 0usize;
    let mut per_token_loss = Vec::with_capacity(batch.rollouts.len());
    let mut grads = Vec::with_capacity(batch.rollouts.len());

    for rollout in &batch.rollouts {
        let n = rollout.token_stream.len();
        // Optional length normalization divides each rollout's terms by its
        // unmasked token count; the written objective uses norm = 1.
        let rollout_active = rollout.loss_mask.iter().filter(|&&m| m == 1).count();
        let norm = if batch.per_token_mean { rollout_active.max(1) as f64 } else { 1.0 };
        let mut losses = vec![0.0_f64; n];
        let mut grad = vec![0.0_f64; n];
        for t in 0..n {
            if rollout.loss_mask[t] == 0 {
                continue;
            }
            active += 1;
            let a_hat = rollout.advantage;
            if a_hat == 0.0 {
                continue;
            }
            let rho = (rollout.new_logprobs[t] - rollout.old_logprobs[t]).exp();
            let unclipped = rho * a_hat;
            let clipped_term = rho.clamp(lo, hi) * a_hat;
            let term = if unclipped <= clipped_term { unclipped } else { clipped_term } / norm;
            sum += term;
            losses[t] = -term / g;
            if unclipped <= clipped_term {
                grad[t] = rho * a_hat / norm / g;
            } else {
                clipped += 1;
            }
        }
        per_token_loss.push(losses);
        grads.push(grad);
    }

    Ok(GrpoOutcome {
        j_value: sum / g,
        per_token_loss,
        grad_new_logprobs: grads,
        clip_fraction: if active == 0 { 0.0 } else { clipped as f64 / active as f64 },
        active_tokens: active,
    })
}
