//! The multi-turn agent-environment loop: prompt assembly, tool dispatch
//! with a parallel-call ceiling, termination conditions, and trajectory
//! recording with token spans and loss masks.
//!
//! Episodes are single-threaded internally; many run concurrently over one
//! shared immutable bank and shared backend clients. With a scripted policy
//! an episode is a pure function of (bank, question, script, config).

mod flatten;
mod prompt;
pub mod tools;

pub use flatten::flatten_with_mask;
pub use prompt::{build_initial_prompt, SYSTEM_PROMPT};

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{ChatMessage, EmbeddingBackend, PolicyBackend, TokenTrace};
use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::search::{format_tool_response, keyword_search, semantic_search, SearchResult};

use tools::{parse_call, tool_schemas, ParsedCall, SearchArgs};

/// Ablation switches. At most one search mode may be disabled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// Retrieved memories come back without surrounding messages.
    #[serde(default)]
    pub disable_context_groups: bool,
    #[serde(default)]
    pub disable_keyword: bool,
    #[serde(default)]
    pub disable_semantic: bool,
}

/// Episode configuration. Defaults mirror the training setup: 20 assistant
/// turns, 5 parallel tool calls, 8192-token prompt budget, 24576-token
/// response budget, 5 seed memories per speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub max_turns: u32,
    pub max_parallel_calls: usize,
    pub prompt_token_budget: usize,
    pub response_token_budget: usize,
    /// Headroom assumed for the next generation when checking the context
    /// budget before each policy call.
    pub generation_reserve: usize,
    pub temperature: f64,
    pub seed_context_k: usize,
    /// Cap on keyword-search results per call.
    pub keyword_cap: usize,
    /// Default top_k for semantic calls that do not set one.
    pub default_top_k: usize,
    /// Phrase describing the memory granularity in the task prompt.
    pub level_descriptor: String,
    pub ablations: Ablations,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_turns: 20,
            max_parallel_calls: 5,
            prompt_token_budget: 8192,
            response_token_budget: 24576,
            generation_reserve: 1024,
            temperature: 1.0,
            seed_context_k: 5,
            keyword_cap: crate::search::DEFAULT_KEYWORD_CAP,
            default_top_k: 5,
            level_descriptor: "individual conversation messages".into(),
            ablations: Ablations::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0
            || self.max_parallel_calls == 0
            || self.prompt_token_budget == 0
            || self.response_token_budget == 0
        {
            return Err(Error::Validation("episode budgets and caps must be positive".into()));
        }
        if self.ablations.disable_keyword && self.ablations.disable_semantic {
            return Err(Error::Validation("at most one search mode may be disabled".into()));
        }
        Ok(())
    }

    fn group_radius(&self) -> usize {
        if self.ablations.disable_context_groups {
            0
        } else {
            crate::search::DEFAULT_GROUP_RADIUS
        }
    }
}

/// Why an episode ended. Exactly one terminal state per trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TerminalState {
    /// `submit_answer` was called.
    Submitted,
    /// The assistant-turn cap was reached without a submission.
    TurnCapExceeded,
    /// The projected dialogue would exceed the token budget.
    ContextExceeded,
    /// The assistant produced a message with no tool calls.
    NoToolCall,
}

/// One assistant turn with its tool responses, aligned one-to-one with the
/// tool calls in call order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TurnRecord {
    pub assistant_message: ChatMessage,
    /// Token trace of the assistant message, absent when the backend did
    /// not provide one (evaluation-only servers).
    pub tokens: Option<TokenTrace>,
    pub tool_responses: Vec<ChatMessage>,
}

/// One complete episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    /// The rendered initial dialogue (system + task prompt).
    pub initial_messages: Vec<ChatMessage>,
    pub turns: Vec<TurnRecord>,
    pub terminal: TerminalState,
    /// Present iff `terminal == Submitted`.
    pub final_answer: Option<String>,
    /// Flattened dialogue token ids; filled when the policy supports
    /// tokenization (see [`flatten_with_mask`]), else empty.
    pub token_stream: Vec<u32>,
    /// 1 exactly on assistant-generated tokens.
    pub loss_mask: Vec<u8>,
    /// Whether token_stream/loss_mask are populated.
    pub flattened: bool,
}

impl Trajectory {
    pub fn n_turns(&self) -> u32 {
        self.turns.len() as u32
    }

    pub fn submitted(&self) -> bool {
        self.terminal == TerminalState::Submitted
    }
}

/// Runs episodes for one memory bank against shared backends.
pub struct EpisodeEngine {
    pub bank: Arc<MemoryBank>,
    pub policy: Arc<dyn PolicyBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub config: EpisodeConfig,
}

impl EpisodeEngine {
    pub fn new(
        bank: Arc<MemoryBank>,
        policy: Arc<dyn PolicyBackend>,
        embedder: Arc<dyn EmbeddingBackend>,
        config: EpisodeConfig,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self { bank, policy, embedder, config })
    }

    /// Runs one episode to termination.
    ///
    /// Backend failures abort with an error and are never scored as a
    /// reward; every other outcome is a [`Trajectory`] with exactly one
    /// terminal state.
    pub async fn run_episode(&self, qa: &QAItem) -> Result<Trajectory> {
        let config = &self.config;
        let initial =
            build_initial_prompt(&self.bank, qa, self.embedder.as_ref(), config).await?;
        let mut messages = initial.clone();
        let mut turns: Vec<TurnRecord> = Vec::new();
        let mut assistant_tokens = 0usize;
        let mut dialogue_tokens = self.count_dialogue_tokens(&initial).await?;

        let schemas = tool_schemas();
        let budget = config.prompt_token_budget + config.response_token_budget;

        let (terminal, final_answer) = loop {
            // Context check before each generation.
            if dialogue_tokens + config.generation_reserve > budget {
                break (TerminalState::ContextExceeded, None);
            }

            let max_tokens =
                (config.response_token_budget.saturating_sub(assistant_tokens)).max(16);
            let generated = self
                .policy
                .generate(&messages, &schemas, config.temperature, max_tokens)
                .await?;
            let turn_number = turns.len() as u32 + 1;
            let assistant = generated.message.clone();
            if let Some(trace) = &generated.tokens {
                trace.validate()?;
                assistant_tokens += trace.ids.len();
                dialogue_tokens += trace.ids.len();
            } else {
                dialogue_tokens += self.count_text_tokens(&assistant.content).await?;
            }
            messages.push(assistant.clone());

            if assistant.tool_calls.is_empty() {
                turns.push(TurnRecord {
                    assistant_message: assistant,
                    tokens: generated.tokens,
                    tool_responses: Vec::new(),
                });
                break (TerminalState::NoToolCall, None);
            }

            let turns_remaining = config.max_turns - turn_number;
            let mut responses: Vec<ChatMessage> = Vec::new();
            let mut submitted: Option<String> = None;
            for (i, call) in assistant.tool_calls.iter().enumerate() {
                let text = if submitted.is_some() {
                    "Error: episode already ended (answer submitted); call not executed."
                        .to_string()
                } else if i >= config.max_parallel_calls {
                    format!(
                        "Error: too many tool calls in one turn; only the first {} were executed.",
                        config.max_parallel_calls
                    )
                } else {
                    match parse_call(call) {
                        Err(violation) => format!("Error: {violation}"),
                        Ok(ParsedCall::SubmitAnswer { answer }) => {
                            submitted = Some(answer);
                            "Answer submitted.".to_string()
                        }
                        Ok(ParsedCall::SearchMemory(args)) => {
                            match self.run_search(&args, turns_remaining).await {
                                Ok(text) => text,
                                Err(violation) => format!("Error: {violation}"),
                            }
                        }
                    }
                };
                responses.push(ChatMessage::tool(text, call.call_id.clone()));
            }

            for response in &responses {
                dialogue_tokens += self.count_text_tokens(&response.content).await?;
            }
            messages.extend(responses.iter().cloned());
            turns.push(TurnRecord {
                assistant_message: assistant,
                tokens: generated.tokens,
                tool_responses: responses,
            });

            if let Some(answer) = submitted {
                break (TerminalState::Submitted, Some(answer));
            }
            if turn_number >= config.max_turns {
                break (TerminalState::TurnCapExceeded, None);
            }
        };

        let mut trajectory = Trajectory {
            question_id: qa.question_id.clone(),
            initial_messages: initial,
            turns,
            terminal,
            final_answer,
            token_stream: Vec::new(),
            loss_mask: Vec::new(),
            flattened: false,
        };
        if self.policy.supports_tokenize() {
            match flatten_with_mask(&trajectory, self.policy.as_ref()).await {
                Ok((stream, mask)) => {
                    trajectory.token_stream = stream;
                    trajectory.loss_mask = mask;
                    trajectory.flattened = true;
                }
                // Trace-less turns are fine for evaluation; training
                // re-checks and refuses.
                Err(Error::Capability(_)) => {}
                Err(other) => return Err(other),
            }
        }
        Ok(trajectory)
    }

    /// Executes one search call, honoring ablations. `Ok` is the formatted
    /// tool response; `Err` is a violation message rendered back to the
    /// agent as an error tool-response. Neither aborts the episode.
    async fn run_search(
        &self,
        args: &SearchArgs,
        turns_remaining: u32,
    ) -> std::result::Result<String, String> {
        let config = &self.config;
        let result: SearchResult = if args.semantic {
            if config.ablations.disable_semantic {
                return Err("semantic search is disabled in this configuration".into());
            }
            let query = args.query.clone().expect("validated");
            let embedded = self.embedder.embed(&[query]).await.map_err(|e| e.to_string())?;
            semantic_search(
                &self.bank,
                &embedded[0],
                args.top_k.unwrap_or(config.default_top_k),
                &args.filters,
                config.group_radius(),
            )
            .map_err(violation_text)?
        } else {
            if config.ablations.disable_keyword {
                return Err("keyword search is disabled in this configuration".into());
            }
            keyword_search(
                &self.bank,
                &args.keywords,
                &args.filters,
                args.top_k.unwrap_or(config.keyword_cap),
                config.group_radius(),
            )
            .map_err(violation_text)?
        };
        Ok(format_tool_response(&result, turns_remaining))
    }

    async fn count_dialogue_tokens(&self, messages: &[ChatMessage]) -> Result<usize> {
        let mut total = 0;
        for m in messages {
            total += self.count_text_tokens(&m.content).await?;
        }
        Ok(total)
    }

    /// Token count via the policy tokenizer, with a documented fallback
    /// estimate (bytes/4 + 4) for backends without one. The estimate only
    /// feeds the context-budget check, never the loss mask.
    async fn count_text_tokens(&self, text: &str) -> Result<usize> {
        if self.policy.supports_tokenize() {
            match self.policy.tokenize(text).await {
                Ok(ids) => return Ok(ids.len()),
                Err(Error::Capability(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(text.len() / 4 + 4)
    }
}

/// Message shown to the agent for a refused search, without the error
/// variant prefix.
fn violation_text(e: Error) -> String {
    match e {
        Error::Validation(msg) => msg,
        other => other.to_string(),
    }
}
