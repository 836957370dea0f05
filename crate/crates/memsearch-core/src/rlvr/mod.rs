//! Verifiable reward and GRPO mathematics: token F1, the composite reward,
//! group-standardized advantages, token-level ratios with masked broadcast,
//! and the clipped surrogate objective with analytic gradients with respect
//! to supplied log-probabilities.
//!
//! Everything here is a pure function of its inputs; groups evaluate
//! concurrently without coordination.

mod f1;
mod grpo;
mod reward;
mod step;

pub use f1::{normalize_tokens, token_f1};
pub use grpo::{
    group_advantages, grpo_objective, BatchRollout, GrpoBatch, GrpoOutcome, DEFAULT_CLIP_HIGH,
    DEFAULT_CLIP_LOW, DEFAULT_EPSILON_STD,
};
pub use reward::{compute_reward, RewardBreakdown};
pub use step::{assemble_training_step, RolloutGroup, StepSummary, TrainingStep};
