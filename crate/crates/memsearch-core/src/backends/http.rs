//! HTTP clients for OpenAI-compatible model services.
//!
//! The policy client speaks `/chat/completions` with tools and logprobs
//! enabled, and expects two adjacent endpoints on the same base URL when
//! training: `/score` (log-probabilities of given token ids under the
//! current weights) and `/tokenize`. Servers that return logprobs without
//! token ids still evaluate fine; training refuses them.
//!
//! Every client bounds its in-flight requests with a semaphore and retries
//! transport failures and 5xx responses with exponential backoff before
//! giving up.

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::error::{Error, Result};

use super::judge::{judge_prompt, parse_verdict, STRICT_FORMAT_REMINDER};
use super::{
    ChatMessage, EmbeddingBackend, FinishReason, GenerationResult, JudgeBackend, PolicyBackend,
    Role, TokenTrace, ToolCall, ToolSchema, Verdict,
};

/// Connection settings shared by the HTTP clients.
#[derive(Debug, Clone)]
pub struct HttpSettings {
    /// Base URL including the API prefix, e.g. `http://host:8000/v1`.
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt, for transport failures and 5xx.
    pub max_retries: u32,
    pub retry_base: Duration,
    pub max_in_flight: usize,
}

impl HttpSettings {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_retries: 3,
            retry_base: Duration::from_millis(250),
            max_in_flight: 8,
        }
    }
}

struct HttpClient {
    settings: HttpSettings,
    http: reqwest::Client,
    gate: Semaphore,
}

impl HttpClient {
    fn new(settings: HttpSettings) -> Result<Self> {
        let http = reqwest::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| Error::Backend(e.to_string()))?;
        let gate = Semaphore::new(settings.max_in_flight.max(1));
        Ok(Self { settings, http, gate })
    }

    async fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.settings.base_url, path);
        let mut attempt = 0u32;
        loop {
            let _permit = self.gate.acquire().await.expect("semaphore closed");
            let mut req = self.http.post(&url).json(body);
            if let Some(key) = &self.settings.api_key {
                req = req.bearer_auth(key);
            }
            let outcome = req.send().await;
            drop(_permit);

            let retryable = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<Value>()
                            .await
                            .map_err(|e| Error::Backend(format!("{url}: bad JSON: {e}")));
                    }
                    let body = resp.text().await.unwrap_or_default();
                    if status.is_server_error() {
                        format!("{url}: {status}: {body}")
                    } else {
                        return Err(Error::Backend(format!("{url}: {status}: {body}")));
                    }
                }
                Err(e) => format!("{url}: {e}"),
            };

            if attempt >= self.settings.max_retries {
                return Err(Error::Backend(format!(
                    "{retryable} (gave up after {} attempts)",
                    attempt + 1
                )));
            }
            let delay = self.settings.retry_base * 2u32.saturating_pow(attempt);
            tokio::time::sleep(delay).await;
            attempt += 1;
        }
    }
}

/// Policy service client.
pub struct HttpPolicy {
    client: HttpClient,
}

impl HttpPolicy {
    pub fn new(settings: HttpSettings) -> Result<Self> {
        Ok(Self { client: HttpClient::new(settings)? })
    }
}

fn render_messages(messages: &[ChatMessage]) -> Vec<Value> {
    messages
        .iter()
        .map(|m| {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
                Role::Assistant => "assistant",
                Role::Tool => "tool",
            };
            let mut obj = json!({"role": role, "content": m.content});
            if !m.tool_calls.is_empty() {
                obj["tool_calls"] = Value::Array(
                    m.tool_calls
                        .iter()
                        .map(|c| {
                            json!({
                                "id": c.call_id,
                                "type": "function",
                                "function": {
                                    "name": c.name,
                                    "arguments": c.arguments.to_string(),
                                },
                            })
                        })
                        .collect(),
                );
            }
            if let Some(id) = &m.tool_call_id {
                obj["tool_call_id"] = json!(id);
            }
            obj
        })
        .collect()
}

#[derive(Debug, Deserialize)]
struct WireToolCall {
    #[serde(default)]
    id: Option<String>,
    function: WireFunction,
}

#[derive(Debug, Deserialize)]
struct WireFunction {
    name: String,
    #[serde(default)]
    arguments: String,
}

fn parse_choice(choice: &Value) -> Result<GenerationResult> {
    let message = choice
        .get("message")
        .ok_or_else(|| Error::Backend("chat completion without message".into()))?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or_default().to_string();

    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for (i, raw) in calls.iter().enumerate() {
            let wire: WireToolCall = serde_json::from_value(raw.clone())
                .map_err(|e| Error::Backend(format!("malformed tool call {i}: {e}")))?;
            // Unparseable argument text is preserved as a string so the
            // episode engine can answer with a structured error.
            let arguments = serde_json::from_str::<Value>(&wire.function.arguments)
                .unwrap_or(Value::String(wire.function.arguments.clone()));
            tool_calls.push(ToolCall {
                call_id: wire.id.unwrap_or_else(|| format!("call-{i}")),
                name: wire.function.name,
                arguments,
            });
        }
    }

    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") => FinishReason::Stop,
        Some("tool_calls") => FinishReason::ToolCalls,
        Some("length") => FinishReason::Length,
        _ => FinishReason::Other,
    };

    // Token ids arrive via a choice-level extension; logprobs via the
    // standard field. Both are needed for a usable trace.
    let ids: Option<Vec<u32>> = choice
        .get("token_ids")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as u32).collect());
    let logprobs: Option<Vec<f64>> = choice
        .get("logprobs")
        .and_then(|l| l.get("content"))
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(|t| t.get("logprob").and_then(Value::as_f64)).collect());
    let tokens = match (ids, logprobs) {
        (Some(ids), Some(logprobs)) if ids.len() == logprobs.len() => {
            let trace = TokenTrace { ids, logprobs };
            trace.validate()?;
            Some(trace)
        }
        _ => None,
    };

    Ok(GenerationResult {
        message: ChatMessage::assistant(content, tool_calls),
        tokens,
        finish_reason,
    })
}

#[async_trait]
impl PolicyBackend for HttpPolicy {
    async fn generate(
        &self,
        messages: &[ChatMessage],
        tools: &[ToolSchema],
        temperature: f64,
        max_tokens: usize,
    ) -> Result<GenerationResult> {
        let mut body = json!({
            "model": self.client.settings.model,
            "messages": render_messages(messages),
            "temperature": temperature,
            "max_tokens": max_tokens,
            "logprobs": true,
        });
        if !tools.is_empty() {
            body["tools"] = Value::Array(
                tools
                    .iter()
                    .map(|t| {
                        json!({
                            "type": "function",
                            "function": {
                                "name": t.name,
                                "description": t.description,
                                "parameters": t.parameters,
                            },
                        })
                    })
                    .collect(),
            );
            body["tool_choice"] = json!("auto");
        }
        let resp = self.client.post_json("/chat/completions", &body).await?;
        let choice = resp
            .get("choices")
            .and_then(Value::as_array)
            .and_then(|c| c.first())
            .ok_or_else(|| Error::Backend("chat completion without choices".into()))?;
        parse_choice(choice)
    }

    async fn score(&self, messages: &[ChatMessage], token_ids: &[u32]) -> Result<Vec<f64>> {
        let body = json!({
            "model": self.client.settings.model,
            "messages": render_messages(messages),
            "token_ids": token_ids,
        });
        let resp = self.client.post_json("/score", &body).await?;
        let lps: Vec<f64> = resp
            .get("token_logprobs")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Capability("score endpoint returned no token_logprobs".into()))?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        if lps.len() != token_ids.len() {
            return Err(Error::Backend(format!(
                "score returned {} logprobs for {} tokens",
                lps.len(),
                token_ids.len()
            )));
        }
        Ok(lps)
    }

    async fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let body = json!({"model": self.client.settings.model, "text": text});
        let resp = self.client.post_json("/tokenize", &body).await?;
        resp.get("token_ids")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_u64).map(|v| v as u32).collect())
            .ok_or_else(|| Error::Capability("tokenize endpoint returned no token_ids".into()))
    }
}

/// Embedding service client with a fixed expected dimension.
pub struct HttpEmbedder {
    client: HttpClient,
    dimension: usize,
}

impl HttpEmbedder {
    pub fn new(settings: HttpSettings, dimension: usize) -> Result<Self> {
        Ok(Self { client: HttpClient::new(settings)?, dimension })
    }
}

#[async_trait]
impl EmbeddingBackend for HttpEmbedder {
    async fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let body = json!({"model": self.client.settings.model, "input": texts});
        let resp = self.client.post_json("/embeddings", &body).await?;
        let data = resp
            .get("data")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Backend("embeddings response without data".into()))?;
        let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
        for (pos, item) in data.iter().enumerate() {
            let index = item.get("index").and_then(Value::as_u64).map(|v| v as usize).unwrap_or(pos);
            let v: Vec<f32> = item
                .get("embedding")
                .and_then(Value::as_array)
                .ok_or_else(|| Error::Backend(format!("embedding {pos} missing vector")))?
                .iter()
                .filter_map(Value::as_f64)
                .map(|x| x as f32)
                .collect();
            if v.len() != self.dimension {
                return Err(Error::DimensionMismatch { expected: self.dimension, got: v.len() });
            }
            rows.push((index, v));
        }
        rows.sort_by_key(|(i, _)| *i);
        if rows.len() != texts.len() {
            return Err(Error::Backend(format!(
                "embedding backend returned {} vectors for {} inputs",
                rows.len(),
                texts.len()
            )));
        }
        Ok(rows.into_iter().map(|(_, v)| v).collect())
    }

    fn dimension(&self) -> usize {
        self.dimension
    }
}

/// Judge service client. Sends the judge prompt at temperature 0, parses
/// the JSON label, re-asks once with a stricter reminder, and falls back to
/// `Wrong` when the reply still fails to parse. Transport failures become
/// judge failures so rewards are never inflated by flaky infrastructure.
pub struct HttpJudge {
    client: HttpClient,
}

impl HttpJudge {
    pub fn new(settings: HttpSettings) -> Result<Self> {
        Ok(Self { client: HttpClient::new(settings)? })
    }

    async fn ask(&self, messages: &[Value]) -> Result<String> {
        let body = json!({
            "model": self.client.settings.model,
            "messages": messages,
            "temperature": 0.0,
        });
        let resp = self
            .client
            .post_json("/chat/completions", &body)
            .await
            .map_err(|e| Error::JudgeFailure(e.to_string()))?;
        resp.get("choices")
            .and_then(Value::as_array)
            .and_then(|c| c.first())
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Error::JudgeFailure("judge reply without content".into()))
    }
}

#[async_trait]
impl JudgeBackend for HttpJudge {
    async fn judge(&self, question: &str, gold: &str, generated: &str) -> Result<Verdict> {
        let prompt = judge_prompt(question, gold, generated);
        let mut messages = vec![json!({"role": "user", "content": prompt})];
        let first = self.ask(&messages).await?;
        if let Some(v) = parse_verdict(&first) {
            return Ok(v);
        }
        messages.push(json!({"role": "assistant", "content": first}));
        messages.push(json!({"role": "user", "content": STRICT_FORMAT_REMINDER}));
        let second = self.ask(&messages).await?;
        match parse_verdict(&second) {
            Some(v) => Ok(v),
            None => {
                tracing::warn!(question, "judge reply unparseable twice; scoring Wrong");
                Ok(Verdict::Wrong)
            }
        }
    }
}
