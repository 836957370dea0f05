//! Flattening a trajectory into one token stream with a loss mask: 1 on
//! assistant-generated tokens, 0 on prompt and tool-response tokens.

use crate::backends::{ChatMessage, PolicyBackend};
use crate::error::{Error, Result};

use super::Trajectory;

/// Canonical text rendering of environment messages for tokenization.
/// Assistant tokens never go through this; they come from the generation
/// trace itself.
pub(crate) fn environment_text(messages: &[ChatMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&format!("<{:?}> {}\n", m.role, m.content));
    }
    out
}

/// Concatenates the dialogue into (token_stream, loss_mask).
///
/// Prompt and tool-response segments are tokenized with the policy
/// tokenizer and masked 0; assistant segments use their recorded generation
/// token ids and are masked 1. The mask therefore sums to the total
/// assistant token count, which is verified before returning.
pub async fn flatten_with_mask(
    trajectory: &Trajectory,
    policy: &dyn PolicyBackend,
) -> Result<(Vec<u32>, Vec<u8>)> {
    if !policy.supports_tokenize() {
        return Err(Error::Capability("policy backend does not tokenize environment text".into()));
    }

    let mut stream: Vec<u32> = Vec::new();
    let mut mask: Vec<u8> = Vec::new();
    let mut expected_assistant = 0usize;
    let mut segments = 0usize;

    let push_env = |ids: Vec<u32>, stream: &mut Vec<u32>, mask: &mut Vec<u8>| {
        mask.extend(std::iter::repeat(0u8).take(ids.len()));
        stream.extend(ids);
    };

    let prompt_ids = policy.tokenize(&environment_text(&trajectory.initial_messages)).await?;
    segments += prompt_ids.len();
    push_env(prompt_ids, &mut stream, &mut mask);

    for (i, turn) in trajectory.turns.iter().enumerate() {
        let trace = turn.tokens.as_ref().ok_or_else(|| {
            Error::Capability(format!(
                "turn {}: assistant token trace unavailable; training requires a backend that \
                 returns token ids and logprobs",
                i + 1
            ))
        })?;
        trace.validate()?;
        expected_assistant += trace.ids.len();
        segments += trace.ids.len();
        mask.extend(std::iter::repeat(1u8).take(trace.ids.len()));
        stream.extend(trace.ids.iter().copied());

        if !turn.tool_responses.is_empty() {
            let ids = policy.tokenize(&environment_text(&turn.tool_responses)).await?;
            segments += ids.len();
            push_env(ids, &mut stream, &mut mask);
        }
    }

    if stream.len() != mask.len() || stream.len() != segments {
        return Err(Error::Validation(format!(
            "token accounting mismatch: stream {} vs mask {} vs segments {}",
            stream.len(),
            mask.len(),
            segments
        )));
    }
    let masked: usize = mask.iter().map(|&b| usize::from(b)).sum();
    if masked != expected_assistant {
        return Err(Error::Validation(format!(
            "loss mask covers {masked} tokens but assistant turns generated {expected_assistant}"
        )));
    }
    Ok((stream, mask))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{ScriptedPolicy, TokenTrace};
    use crate::episode::{TerminalState, TurnRecord};

    fn trajectory(turn_traces: Vec<Option<TokenTrace>>) -> Trajectory {
        Trajectory {
            question_id: "q".into(),
            initial_messages: vec![
                ChatMessage::system("sys prompt words here"),
                ChatMessage::user("user prompt with several words"),
            ],
            turns: turn_traces
                .into_iter()
                .enumerate()
                .map(|(i, tokens)| TurnRecord {
                    assistant_message: ChatMessage::assistant(format!("turn {i}"), vec![]),
                    tokens,
                    tool_responses: if i == 0 {
                        vec![ChatMessage::tool("tool response text", "c1")]
                    } else {
                        Vec::new()
                    },
                })
                .collect(),
            terminal: TerminalState::NoToolCall,
            final_answer: None,
            token_stream: Vec::new(),
            loss_mask: Vec::new(),
            flattened: false,
        }
    }

    #[tokio::test]
    async fn mask_counts_exactly_the_assistant_tokens() {
        let policy = ScriptedPolicy::single(vec![]);
        let t = trajectory(vec![
            Some(TokenTrace { ids: vec![1, 2, 3, 4, 5, 6, 7], logprobs: vec![-0.1; 7] }),
            Some(TokenTrace { ids: vec![8, 9], logprobs: vec![-0.2; 2] }),
        ]);
        let (stream, mask) = flatten_with_mask(&t, &policy).await.unwrap();
        assert_eq!(stream.len(), mask.len());
        let ones: usize = mask.iter().map(|&b| usize::from(b)).sum();
        assert_eq!(ones, 9);
        // Assistant segments sit between environment segments in order.
        let first_one = mask.iter().position(|&b| b == 1).unwrap();
        assert_eq!(stream[first_one..first_one + 7], [1, 2, 3, 4, 5, 6, 7]);
    }

    #[tokio::test]
    async fn empty_trajectory_flattens_to_prompt_only() {
        let policy = ScriptedPolicy::single(vec![]);
        let mut t = trajectory(vec![]);
        t.initial_messages = vec![];
        let (stream, mask) = flatten_with_mask(&t, &policy).await.unwrap();
        assert!(stream.is_empty());
        assert!(mask.is_empty());
    }

    #[tokio::test]
    async fn missing_trace_is_a_capability_error() {
        let policy = ScriptedPolicy::single(vec![]);
        let t = trajectory(vec![None]);
        let err = flatten_with_mask(&t, &policy).await.unwrap_err();
        assert!(matches!(err, Error::Capability(_)), "{err}");
    }
}
