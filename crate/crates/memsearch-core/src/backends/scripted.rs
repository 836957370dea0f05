//! Deterministic offline backends: a scripted policy that replays canned
//! assistant turns, a fixture judge, and a feature-hashing embedder. They
//! make every end-to-end path runnable with no model services at all.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rlvr::token_f1;

use super::{
    ChatMessage, EmbeddingBackend, FinishReason, GenerationResult, JudgeBackend, PolicyBackend,
    Role, TokenTrace, ToolCall, ToolSchema, Verdict,
};

/// One scripted assistant turn.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ScriptToolCall>,
    /// Synthesized from the rendered message when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_ids: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScriptToolCall {
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Value,
}

/// An ordered list of assistant turns for one episode.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Script {
    pub steps: Vec<ScriptStep>,
}

/// Script file format: a default script (or several variants cycled per
/// episode) plus per-question overrides keyed by exact question text.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub default: Vec<Script>,
    #[serde(default)]
    pub by_question: HashMap<String, Vec<Script>>,
}

/// Replays scripts as policy generations.
///
/// The question is read from the `Target Question:` line of the prompt; the
/// step index is the number of assistant messages already in the dialogue,
/// so a single-variant script makes `generate` a pure function of its
/// inputs. Multi-variant scripts cycle variants per episode in start order
/// and are deterministic when episodes run sequentially.
pub struct ScriptedPolicy {
    scripts: ScriptFile,
    state: Mutex<HashMap<String, VariantState>>,
}

#[derive(Default)]
struct VariantState {
    started: usize,
    active: usize,
}

impl ScriptedPolicy {
    pub fn new(scripts: ScriptFile) -> Self {
        Self { scripts, state: Mutex::new(HashMap::new()) }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let scripts: ScriptFile = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(Self::new(scripts))
    }

    /// Single script replayed for every question.
    pub fn single(steps: Vec<ScriptStep>) -> Self {
        Self::new(ScriptFile { default: vec![Script { steps }], by_question: HashMap::new() })
    }

    fn variants_for(&self, question: &str) -> Result<&[Script]> {
        let variants = self
            .scripts
            .by_question
            .get(question)
            .map(Vec::as_slice)
            .unwrap_or(&self.scripts.default);
        if variants.is_empty() {
            return Err(Error::ScriptExhausted(format!(
                "no script for question {question:?} and no default"
            )));
        }
        Ok(variants)
    }
}

/// Extracts the target question from the rendered prompt messages.
fn extract_question(messages: &[ChatMessage]) -> String {
    for msg in messages {
        if msg.role != Role::User {
            continue;
        }
        for line in msg.content.lines() {
            if let Some(q) = line.strip_prefix("Target Question: ") {
                return q.trim().to_string();
            }
        }
    }
    String::new()
}

#[async_trait]
impl PolicyBackend for ScriptedPolicy {
    async fn generate(
        &self,
        messages: &[ChatMessage],
        _tools: &[ToolSchema],
        _temperature: f64,
        _max_tokens: usize,
    ) -> Result<GenerationResult> {
        let question = extract_question(messages);
        let turn = messages.iter().filter(|m| m.role == Role::Assistant).count();
        let variants = self.variants_for(&question)?;

        let variant = {
            let mut state = self.state.lock().expect("script state lock");
            let entry = state.entry(question.clone()).or_default();
            if turn == 0 {
                entry.active = entry.started % variants.len();
                entry.started += 1;
            }
            entry.active
        };

        let script = &variants[variant];
        let step = script.steps.get(turn).ok_or_else(|| {
            Error::ScriptExhausted(format!(
                "question {question:?} variant {variant}: no step for turn {}",
                turn + 1
            ))
        })?;

        let tool_calls: Vec<ToolCall> = step
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolCall {
                call_id: format!("call-{}-{}", turn + 1, i + 1),
                name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        let message = ChatMessage::assistant(step.content.clone(), tool_calls);

        let ids = step
            .token_ids
            .clone()
            .unwrap_or_else(|| synth_tokenize(&rendered_text(&message)));
        let logprobs = step
            .token_logprobs
            .clone()
            .unwrap_or_else(|| ids.iter().map(|&id| synth_logprob(id)).collect());
        let trace = TokenTrace { ids, logprobs };
        trace.validate()?;

        let finish_reason = if message.tool_calls.is_empty() {
            FinishReason::Stop
        } else {
            FinishReason::ToolCalls
        };
        Ok(GenerationResult { message, tokens: Some(trace), finish_reason })
    }

    async fn score(&self, _messages: &[ChatMessage], token_ids: &[u32]) -> Result<Vec<f64>> {
        Ok(token_ids.iter().map(|&id| synth_logprob(id)).collect())
    }

    async fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        Ok(synth_tokenize(text))
    }
}

/// Canonical text of an assistant message for synthetic tokenization.
fn rendered_text(message: &ChatMessage) -> String {
    let mut text = message.content.clone();
    for call in &message.tool_calls {
        text.push_str(" <tool:");
        text.push_str(&call.name);
        text.push('>');
        text.push_str(&call.arguments.to_string());
    }
    text
}

/// Deterministic word-level tokenizer: FNV-1a of each whitespace word,
/// folded into a 50k vocabulary.
pub fn synth_tokenize(text: &str) -> Vec<u32> {
    text.split_whitespace().map(|w| (fnv1a64(w.as_bytes()) % 50_000) as u32).collect()
}

/// Deterministic per-token log-probability, position-independent so that
/// re-scoring a generated stream reproduces the generation values exactly
/// (likelihood ratio 1).
pub fn synth_logprob(token_id: u32) -> f64 {
    -0.001 - f64::from(token_id % 97) * 0.01
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Offline judge. `Heuristic` grades by token overlap with the gold answer;
/// `Canned` replays verdicts recorded per question.
pub enum FixtureJudge {
    Heuristic { threshold: f64 },
    Canned { by_question: HashMap<String, Verdict>, default: Verdict },
}

/// Serialized form of [`FixtureJudge`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FixtureJudgeFile {
    Heuristic {
        #[serde(default = "default_threshold")]
        threshold: f64,
    },
    Canned {
        #[serde(default)]
        by_question: HashMap<String, Verdict>,
        default: Verdict,
    },
}

fn default_threshold() -> f64 {
    0.6
}

impl FixtureJudge {
    pub fn heuristic() -> Self {
        FixtureJudge::Heuristic { threshold: default_threshold() }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let file: FixtureJudgeFile = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        })?;
        Ok(match file {
            FixtureJudgeFile::Heuristic { threshold } => FixtureJudge::Heuristic { threshold },
            FixtureJudgeFile::Canned { by_question, default } => {
                FixtureJudge::Canned { by_question, default }
            }
        })
    }
}

#[async_trait]
impl JudgeBackend for FixtureJudge {
    async fn judge(&self, question: &str, gold: &str, generated: &str) -> Result<Verdict> {
        if generated.trim().is_empty() {
            return Ok(Verdict::Wrong);
        }
        Ok(match self {
            FixtureJudge::Heuristic { threshold } => {
                if token_f1(generated, gold) >= *threshold {
                    Verdict::Correct
                } else {
                    Verdict::Wrong
                }
            }
            FixtureJudge::Canned { by_question, default } => {
                by_question.get(question).copied().unwrap_or(*default)
            }
        })
    }
}

/// Deterministic local embedder: signed token feature hashing, L2
/// normalized. Texts sharing vocabulary land near each other, which is all
/// the offline paths need.
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension }
    }

    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0_f32; self.dimension];
        for word in text.to_lowercase().split_whitespace() {
            let h = fnv1a64(word.as_bytes());
            let slot = (h % self.dimension as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[slot] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x /= norm;
            }
        }
        v
    }
}

#[async_trait]
impl EmbeddingBackend for HashingEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}
