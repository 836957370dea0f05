//! The composite verifiable reward: judge verdict times token F1 for
//! submitted answers, -1 for every non-submission terminal.

use serde::{Deserialize, Serialize};

use crate::backends::{JudgeBackend, Verdict};
use crate::corpus::QAItem;
use crate::episode::Trajectory;
use crate::error::Result;

use super::token_f1;

/// Reward components for one trajectory. Rewards live in `{-1} u [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub submitted: bool,
    /// Judge verdict; absent when no answer was submitted (the judge is
    /// never consulted then).
    pub judge_verdict: Option<Verdict>,
    pub f1: f64,
    pub reward: f64,
}

impl RewardBreakdown {
    pub fn not_submitted() -> Self {
        Self { submitted: false, judge_verdict: None, f1: 0.0, reward: -1.0 }
    }

    pub fn submitted(verdict: Verdict, f1: f64) -> Self {
        Self { submitted: true, judge_verdict: Some(verdict), f1, reward: verdict.as_score() * f1 }
    }
}

/// Scores a finished trajectory.
///
/// The judge is consulted for every submitted answer, even at F1 = 0 (the
/// product is 0 regardless, but the verdict is worth logging). Judge
/// infrastructure failures propagate as errors; the caller drops the
/// rollout rather than score it.
pub async fn compute_reward(
    trajectory: &Trajectory,
    qa: &QAItem,
    judge: &dyn JudgeBackend,
) -> Result<RewardBreakdown> {
    match &trajectory.final_answer {
        None => Ok(RewardBreakdown::not_submitted()),
        Some(answer) => {
            let f1 = token_f1(answer, &qa.gold_answer);
            let verdict = judge.judge(&qa.question, &qa.gold_answer, answer).await?;
            Ok(RewardBreakdown::submitted(verdict, f1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::FixtureJudge;
    use crate::corpus::CategoryLabel;
    use crate::episode::TerminalState;
    use proptest::prelude::*;

    fn qa(gold: &str) -> QAItem {
        QAItem {
            question_id: "q/0".into(),
            conversation_id: "c".into(),
            question: "what was it?".into(),
            gold_answer: gold.into(),
            category_code: 4,
            category_label: CategoryLabel::SingleHop,
            excluded_from_eval: false,
            evidence_refs: None,
        }
    }

    fn trajectory(answer: Option<&str>, terminal: TerminalState) -> Trajectory {
        Trajectory {
            question_id: "q/0".into(),
            initial_messages: vec![],
            turns: vec![],
            terminal,
            final_answer: answer.map(str::to_string),
            token_stream: vec![],
            loss_mask: vec![],
            flattened: false,
        }
    }

    #[tokio::test]
    async fn submitted_correct_scores_judge_times_f1() {
        let judge = FixtureJudge::heuristic();
        // f1("shell necklace", "a shell necklace") = 0.8 and the heuristic
        // judge says Correct, so reward = 1 * 0.8.
        let t = trajectory(Some("shell necklace"), TerminalState::Submitted);
        let r = compute_reward(&t, &qa("a shell necklace"), &judge).await.unwrap();
        assert_eq!(r.judge_verdict, Some(Verdict::Correct));
        assert!((r.reward - 0.8).abs() < 1e-12);
    }

    #[tokio::test]
    async fn judge_wrong_zeroes_the_reward() {
        let judge = FixtureJudge::Canned {
            by_question: Default::default(),
            default: Verdict::Wrong,
        };
        let t = trajectory(Some("a shell necklace"), TerminalState::Submitted);
        let r = compute_reward(&t, &qa("a shell necklace"), &judge).await.unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.f1, 1.0);
    }

    #[tokio::test]
    async fn non_submission_is_minus_one_without_a_judge_call() {
        struct PanicJudge;
        #[async_trait::async_trait]
        impl JudgeBackend for PanicJudge {
            async fn judge(&self, _: &str, _: &str, _: &str) -> Result<Verdict> {
                panic!("judge must not be consulted for non-submissions");
            }
        }
        for terminal in [
            TerminalState::TurnCapExceeded,
            TerminalState::ContextExceeded,
            TerminalState::NoToolCall,
        ] {
            let t = trajectory(None, terminal);
            let r = compute_reward(&t, &qa("x"), &PanicJudge).await.unwrap();
            assert_eq!(r.reward, -1.0);
            assert!(r.judge_verdict.is_none());
        }
    }

    proptest! {
        #[test]
        fn reward_stays_in_range(f1 in 0.0f64..=1.0, correct: bool, submitted: bool) {
            let r = if submitted {
                let v = if correct { Verdict::Correct } else { Verdict::Wrong };
                RewardBreakdown::submitted(v, f1)
            } else {
                RewardBreakdown::not_submitted()
            };
            prop_assert!(r.reward == -1.0 || (0.0..=1.0).contains(&r.reward));
        }
    }
}
