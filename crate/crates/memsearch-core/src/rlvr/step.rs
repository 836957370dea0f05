//! Assembling rollout groups into GRPO batches plus the per-step summary
//! consumed by an external weight-update backend and the metrics log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::backends::PolicyBackend;
use crate::episode::Trajectory;
use crate::error::{Error, Result};

use super::{group_advantages, grpo_objective, BatchRollout, GrpoBatch, RewardBreakdown};

/// The G rollouts of one question with their rewards and standardized
/// advantages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RolloutGroup {
    pub question_id: String,
    pub rollouts: Vec<(Trajectory, RewardBreakdown)>,
    pub advantages: Vec<f64>,
    pub epsilon_std: f64,
}

impl RolloutGroup {
    pub fn new(
        question_id: String,
        rollouts: Vec<(Trajectory, RewardBreakdown)>,
        epsilon_std: f64,
    ) -> Self {
        let rewards: Vec<f64> = rollouts.iter().map(|(_, r)| r.reward).collect();
        let advantages = group_advantages(&rewards, epsilon_std);
        Self { question_id, rollouts, advantages, epsilon_std }
    }
}

/// One line of the step-summary JSONL log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: u64,
    pub mean_reward: f64,
    pub reward_std: f64,
    pub mean_abs_advantage: f64,
    /// Mean per-group objective value.
    pub j_value: f64,
    pub clip_fraction: f64,
    pub mean_turns: f64,
    /// Trajectory count by terminal state name.
    pub terminals: BTreeMap<String, usize>,
    pub n_trajectories: usize,
}

/// Aligned batches ready for an external update endpoint, plus the summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingStep {
    pub step: u64,
    pub batches: Vec<GrpoBatch>,
    pub summary: StepSummary,
}

/// Builds one GRPO batch per rollout group, re-scoring every token stream
/// under the current policy for the new log-probabilities.
///
/// Old log-probabilities come from the generation traces; masked positions
/// carry a 0.0 filler that the objective never reads. Refuses rollouts that
/// were not flattened (no token trace capability).
pub async fn assemble_training_step(
    step: u64,
    groups: &[RolloutGroup],
    policy: &dyn PolicyBackend,
    clip_low: f64,
    clip_high: f64,
) -> Result<TrainingStep> {
    if !policy.supports_score() {
        return Err(Error::Capability("policy backend cannot score token streams".into()));
    }

    let mut batches = Vec::with_capacity(groups.len());
    let mut j_sum = 0.0;
    let mut clipped_weighted = 0.0;
    let mut active_total = 0usize;

    for group in groups {
        let mut rollouts = Vec::with_capacity(group.rollouts.len());
        for ((trajectory, _), &advantage) in group.rollouts.iter().zip(&group.advantages) {
            if !trajectory.flattened {
                return Err(Error::Capability(format!(
                    "trajectory {} lacks token stream and mask; the policy backend must \
                     provide token ids, logprobs, and tokenization for training",
                    trajectory.question_id
                )));
            }
            let n = trajectory.token_stream.len();

            // Old logprobs: place each turn's generation logprobs at the
            // masked positions, in order.
            let mut old = vec![0.0_f64; n];
            let turn_lps: Vec<f64> = trajectory
                .turns
                .iter()
                .filter_map(|t| t.tokens.as_ref())
                .flat_map(|t| t.logprobs.iter().copied())
                .collect();
            let masked_positions: Vec<usize> = trajectory
                .loss_mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m == 1)
                .map(|(i, _)| i)
                .collect();
            if masked_positions.len() != turn_lps.len() {
                return Err(Error::Validation(format!(
                    "trajectory {}: {} masked positions vs {} generation logprobs",
                    trajectory.question_id,
                    masked_positions.len(),
                    turn_lps.len()
                )));
            }
            for (&pos, lp) in masked_positions.iter().zip(turn_lps) {
                old[pos] = lp;
            }

            let new = policy
                .score(&trajectory.initial_messages, &trajectory.token_stream)
                .await?;
            if new.len() != n {
                return Err(Error::Backend(format!(
                    "score returned {} logprobs for {} tokens",
                    new.len(),
                    n
                )));
            }

            rollouts.push(BatchRollout {
                token_stream: trajectory.token_stream.clone(),
                loss_mask: trajectory.loss_mask.clone(),
                old_logprobs: old,
                new_logprobs: new,
                advantage,
            });
        }
        let batch = GrpoBatch { rollouts, clip_low, clip_high, per_token_mean: false };
        let outcome = grpo_objective(&batch)?;
        j_sum += outcome.j_value;
        clipped_weighted += outcome.clip_fraction * outcome.active_tokens as f64;
        active_total += outcome.active_tokens;
        batches.push(batch);
    }

    let rewards: Vec<f64> = groups
        .iter()
        .flat_map(|g| g.rollouts.iter().map(|(_, r)| r.reward))
        .collect();
    let n = rewards.len();
    let mean_reward = if n == 0 { 0.0 } else { rewards.iter().sum::<f64>() / n as f64 };
    let reward_std = if n == 0 {
        0.0
    } else {
        (rewards.iter().map(|r| (r - mean_reward) * (r - mean_reward)).sum::<f64>() / n as f64)
            .sqrt()
    };
    let mean_abs_advantage = {
        let advs: Vec<f64> = groups.iter().flat_map(|g| g.advantages.iter().copied()).collect();
        if advs.is_empty() { 0.0 } else { advs.iter().map(|a| a.abs()).sum::<f64>() / advs.len() as f64 }
    };
    let mut terminals: BTreeMap<String, usize> = BTreeMap::new();
    let mut turn_sum = 0usize;
    for (t, _) in groups.iter().flat_map(|g| &g.rollouts) {
        *terminals.entry(format!("{:?}", t.terminal)).or_default() += 1;
        turn_sum += t.turns.len();
    }

    let summary = StepSummary {
        step,
        mean_reward,
        reward_std,
        mean_abs_advantage,
        j_value: if groups.is_empty() { 0.0 } else { j_sum / groups.len() as f64 },
        clip_fraction: if active_total == 0 {
            0.0
        } else {
            clipped_weighted / active_total as f64
        },
        mean_turns: if n == 0 { 0.0 } else { turn_sum as f64 / n as f64 },
        terminals,
        n_trajectories: n,
    };

    Ok(TrainingStep { step, batches, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptStep, ScriptToolCall, ScriptedPolicy, TokenTrace, Verdict};
    use crate::backends::ChatMessage;
    use crate::episode::{TerminalState, TurnRecord};
    use serde_json::json;

    fn scripted_trajectory(question_id: &str, ids: Vec<u32>) -> Trajectory {
        let logprobs: Vec<f64> = ids.iter().map(|&i| crate::backends::synth_logprob(i)).collect();
        // A one-turn trajectory: 3 prompt tokens, then the assistant tokens.
        let stream: Vec<u32> = [vec![11, 12, 13], ids.clone()].concat();
        let mask: Vec<u8> = [vec![0, 0, 0], vec![1; ids.len()]].concat();
        Trajectory {
            question_id: question_id.into(),
            initial_messages: vec![ChatMessage::user("prompt")],
            turns: vec![TurnRecord {
                assistant_message: ChatMessage::assistant("a", vec![]),
                tokens: Some(TokenTrace { ids, logprobs }),
                tool_responses: vec![],
            }],
            terminal: TerminalState::Submitted,
            final_answer: Some("x".into()),
            token_stream: stream,
            loss_mask: mask,
            flattened: true,
        }
    }

    fn group(question: &str, rewards: &[f64]) -> RolloutGroup {
        let rollouts = rewards
            .iter()
            .enumerate()
            .map(|(i, &reward)| {
                let t = scripted_trajectory(question, vec![100 + i as u32, 200 + i as u32]);
                let r = RewardBreakdown {
                    submitted: true,
                    judge_verdict: Some(Verdict::Correct),
                    f1: reward.max(0.0),
                    reward,
                };
                (t, r)
            })
            .collect();
        RolloutGroup::new(question.into(), rollouts, 1e-6)
    }

    #[tokio::test]
    async fn four_questions_times_g8_gives_32_trajectories() {
        let policy = ScriptedPolicy::single(vec![ScriptStep {
            content: "s".into(),
            tool_calls: vec![ScriptToolCall { name: "submit_answer".into(), arguments: json!({"answer": "x"}) }],
            ..Default::default()
        }]);
        let groups: Vec<RolloutGroup> =
            (0..4).map(|q| group(&format!("q{q}"), &[1.0, 0.0, 0.5, 0.25, 1.0, 0.0, 0.5, 0.75])).collect();
        let step = assemble_training_step(1, &groups, &policy, 0.2, 0.28).await.unwrap();
        assert_eq!(step.summary.n_trajectories, 32);
        assert_eq!(step.batches.len(), 4);
        assert_eq!(step.batches[0].rollouts.len(), 8);
    }

    #[tokio::test]
    async fn zero_variance_group_contributes_zero_gradient() {
        let policy = ScriptedPolicy::single(vec![]);
        let groups = vec![group("q", &[0.5; 8])];
        let step = assemble_training_step(1, &groups, &policy, 0.2, 0.28).await.unwrap();
        let outcome = grpo_objective(&step.batches[0]).unwrap();
        assert_eq!(outcome.j_value, 0.0);
        assert!(outcome.grad_new_logprobs.iter().flatten().all(|&g| g == 0.0));
    }

    #[tokio::test]
    async fn summary_mean_reward_matches_hand_arithmetic() {
        let policy = ScriptedPolicy::single(vec![]);
        // Rewards: (1.0 + 0.0 + 0.5 + 0.5) / 4 = 0.5
        let groups = vec![group("a", &[1.0, 0.0]), group("b", &[0.5, 0.5])];
        let step = assemble_training_step(7, &groups, &policy, 0.2, 0.28).await.unwrap();
        assert!((step.summary.mean_reward - 0.5).abs() < 1e-12);
        assert_eq!(step.summary.step, 7);
        // Scripted scoring reproduces generation logprobs, so rho = 1
        // everywhere and nothing clips.
        assert_eq!(step.summary.clip_fraction, 0.0);
    }

    #[tokio::test]
    async fn unflattened_rollouts_are_refused() {
        let policy = ScriptedPolicy::single(vec![]);
        let mut g = group("q", &[1.0, 0.0]);
        g.rollouts[0].0.flattened = false;
        let err = assemble_training_step(1, &[g], &policy, 0.2, 0.28).await.unwrap_err();
        assert!(matches!(err, Error::Capability(_)), "{err}");
    }
}
