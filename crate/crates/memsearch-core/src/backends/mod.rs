//! Clients for the three external model services - policy generation, text
//! embedding, and answer judging - plus deterministic offline backends for
//! tests and dry runs.
//!
//! All clients are shareable across concurrent episodes; HTTP clients bound
//! their in-flight requests with an internal semaphore. Model identities are
//! configuration strings, never code.

mod http;
pub mod judge;
mod scripted;

pub use http::{HttpEmbedder, HttpJudge, HttpPolicy, HttpSettings};
pub use judge::{judge_prompt, parse_verdict};
pub use scripted::{
    synth_logprob, synth_tokenize, FixtureJudge, FixtureJudgeFile, HashingEmbedder, Script,
    ScriptFile, ScriptStep, ScriptToolCall, ScriptedPolicy,
};

use std::collections::HashMap;
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::error::{Error, Result};

/// Message roles in a chat dialogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

/// One tool invocation requested by the assistant. The name is kept raw;
/// the episode engine validates it against the tool schemas and answers
/// malformed calls with structured error responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub name: String,
    /// Parsed JSON arguments; servers that send unparseable argument text
    /// surface it here as a JSON string for the engine to reject.
    pub arguments: serde_json::Value,
}

/// One message of the dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    /// For tool-role messages: the id of the call being answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant(content: impl Into<String>, tool_calls: Vec<ToolCall>) -> Self {
        Self { role: Role::Assistant, content: content.into(), tool_calls, tool_call_id: None }
    }

    pub fn tool(content: impl Into<String>, call_id: impl Into<String>) -> Self {
        Self {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }
}

/// JSON-schema description of a tool offered to the policy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

/// Token ids and their log-probabilities under the generating policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub ids: Vec<u32>,
    pub logprobs: Vec<f64>,
}

impl TokenTrace {
    pub fn validate(&self) -> Result<()> {
        if self.ids.len() != self.logprobs.len() {
            return Err(Error::Validation(format!(
                "token trace misaligned: {} ids vs {} logprobs",
                self.ids.len(),
                self.logprobs.len()
            )));
        }
        if let Some(lp) = self.logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
            return Err(Error::Validation(format!("log-probability out of range: {lp}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    ToolCalls,
    Length,
    Other,
}

/// One policy generation: the assistant message plus its token trace when
/// the server provides one. Training refuses traceless results; evaluation
/// proceeds without them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationResult {
    pub message: ChatMessage,
    pub tokens: Option<TokenTrace>,
    pub finish_reason: FinishReason,
}

/// Binary judge verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    Correct,
    Wrong,
}

impl Verdict {
    pub fn as_score(self) -> f64 {
        match self {
            Verdict::Correct => 1.0,
            Verdict::Wrong => 0.0,
        }
    }
}

/// The policy service: generation, re-scoring of token streams, and
/// tokenization of environment text.
#[async_trait]
pub trait PolicyBackend: Send + Sync {
    /// Generates the next assistant message. Deterministic at temperature 0
    /// for fixed inputs.
    async fn generate(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        temperature: f64,
        max_tokens: usize,
    ) -> Result<GenerationResult>;

    /// Log-probabilities of the given tokens under the backend's current
    /// parameters.
    async fn score(&self, messages: &[ChatMessage], token_ids: &[u32]) -> Result<Vec<f64>>;

    /// Tokenizes environment text (prompts, tool responses) with the
    /// policy's tokenizer.
    async fn tokenize(&self, text: &str) -> Result<Vec<u32>>;

    /// Whether `score` is usable; training refuses backends without it.
    fn supports_score(&self) -> bool {
        true
    }

    /// Whether `tokenize` is usable; loss masking requires it.
    fn supports_tokenize(&self) -> bool {
        true
    }
}

/// The embedding service.
#[async_trait]
pub trait EmbeddingBackend: Send + Sync {
    /// One vector per input text, each of `dimension()` components.
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;

    fn dimension(&self) -> usize;
}

/// The judge service: binary semantic-equivalence verdicts.
#[async_trait]
pub trait JudgeBackend: Send + Sync {
    async fn judge(&self, question: &str, gold: &str, generated: &str) -> Result<Verdict>;
}

/// Content-addressed embedding cache. For any multiset of texts, at most
/// one inner call is issued per distinct text.
pub struct CachedEmbedder {
    inner: Arc<dyn EmbeddingBackend>,
    cache: Mutex<HashMap<[u8; 32], Vec<f32>>>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn EmbeddingBackend>) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    fn key(text: &str) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        Sha256::digest(text.as_bytes()).into()
    }
}

#[async_trait]
impl EmbeddingBackend for CachedEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let keys: Vec<[u8; 32]> = texts.iter().map(|t| Self::key(t)).collect();

        // Collect texts that miss the cache, deduplicated in first-seen order.
        let mut missing: Vec<String> = Vec::new();
        let mut missing_keys: Vec<[u8; 32]> = Vec::new();
        {
            let cache = self.cache.lock().await;
            let mut seen = std::collections::HashSet::new();
            for (text, key) in texts.iter().zip(&keys) {
                if !cache.contains_key(key) && seen.insert(*key) {
                    missing.push(text.clone());
                    missing_keys.push(*key);
                }
            }
        }

        if !missing.is_empty() {
            let vectors = self.inner.embed(&missing).await?;
            if vectors.len() != missing.len() {
                return Err(Error::Backend(format!(
                    "embedding backend returned {} vectors for {} inputs",
                    vectors.len(),
                    missing.len()
                )));
            }
            let mut cache = self.cache.lock().await;
            for (key, v) in missing_keys.into_iter().zip(vectors) {
                cache.insert(key, v);
            }
        }

        let cache = self.cache.lock().await;
        Ok(keys.iter().map(|k| cache[k].clone()).collect())
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct CountingEmbedder {
        calls: AtomicUsize,
        texts_seen: AtomicUsize,
    }

    #[async_trait]
    impl EmbeddingBackend for CountingEmbedder {
        async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            self.texts_seen.fetch_add(texts.len(), Ordering::SeqCst);
            Ok(texts.iter().map(|t| vec![t.len() as f32, 1.0]).collect())
        }

        fn dimension(&self) -> usize {
            2
        }
    }

    #[tokio::test]
    async fn cache_issues_at_most_one_call_per_distinct_text() {
        let inner = Arc::new(CountingEmbedder {
            calls: AtomicUsize::new(0),
            texts_seen: AtomicUsize::new(0),
        });
        let cached = CachedEmbedder::new(inner.clone());
        let batch: Vec<String> =
            ["a", "b", "a", "c", "b", "a"].iter().map(|s| s.to_string()).collect();
        let out = cached.embed(&batch).await.unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0], out[2]);
        assert_eq!(inner.texts_seen.load(Ordering::SeqCst), 3);

        // Second pass over the same texts hits the cache entirely.
        cached.embed(&batch).await.unwrap();
        assert_eq!(inner.texts_seen.load(Ordering::SeqCst), 3);

        // Empty input embeds to empty output without a remote call.
        let calls_before = inner.calls.load(Ordering::SeqCst);
        assert!(cached.embed(&[]).await.unwrap().is_empty());
        assert_eq!(inner.calls.load(Ordering::SeqCst), calls_before);
    }

    #[test]
    fn token_trace_validation() {
        let good = TokenTrace { ids: vec![1, 2], logprobs: vec![-0.1, -2.0] };
        assert!(good.validate().is_ok());
        let misaligned = TokenTrace { ids: vec![1], logprobs: vec![-0.1, -2.0] };
        assert!(misaligned.validate().is_err());
        let positive = TokenTrace { ids: vec![1], logprobs: vec![0.5] };
        assert!(positive.validate().is_err());
    }
}
