//! Thin typed client for the memory-search service. One method per
//! endpoint; request and response types come from the core library.

use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use memsearch_core::corpus::DatasetStats;
use memsearch_core::episode::Trajectory;
use memsearch_core::evalh::{DeltaTable, EvalOutcome, EvalReport};
use memsearch_core::rlvr::{GrpoBatch, GrpoOutcome, RewardBreakdown, RolloutGroup};
use memsearch_core::search::{SearchMode, SearchResult};
use memsearch_core::train::TrainOutcome;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    /// Non-2xx reply; carries the server's error message.
    #[error("server ({status}): {message}")]
    Server { status: u16, message: String },
    #[error("decode: {0}")]
    Decode(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, ClientError>;

pub struct Client {
    base_url: String,
    http: reqwest::Client,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Health {
    pub ok: bool,
    pub version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct IngestReply {
    pub normalized_path: std::path::PathBuf,
    pub bank_dirs: Vec<std::path::PathBuf>,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EmbedReply {
    pub conversation_id: String,
    pub records: usize,
    pub newly_embedded: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BankSummary {
    pub conversation_id: String,
    pub records: usize,
    pub embedded: usize,
    pub dimension: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SearchReply {
    pub result: SearchResult,
    pub formatted: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct EpisodeReply {
    pub trajectory: Trajectory,
    #[serde(default)]
    pub reward: Option<RewardBreakdown>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct CompareReply {
    pub table: DeltaTable,
    pub rendered: String,
}

/// Search parameters mirroring the `/api/search` request body.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SearchParams {
    pub query: Option<String>,
    pub keywords: Vec<String>,
    pub top_k: Option<usize>,
    pub speaker: Option<String>,
    pub session: Option<u32>,
    pub group_radius: Option<usize>,
}

impl Client {
    /// Connects to a service base URL, e.g. `http://127.0.0.1:7070`.
    ///
    /// No read timeout: train and eval calls legitimately run long; the
    /// connect timeout still catches dead servers quickly.
    pub fn new(base_url: impl Into<String>) -> Result<Self> {
        let http = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .build()?;
        Ok(Self { base_url: base_url.into().trim_end_matches('/').to_string(), http })
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json::<T>().await?);
        }
        let message = match resp.json::<Value>().await {
            Ok(v) => v
                .get("error")
                .and_then(Value::as_str)
                .map(str::to_string)
                .unwrap_or_else(|| v.to_string()),
            Err(e) => e.to_string(),
        };
        Err(ClientError::Server { status: status.as_u16(), message })
    }

    async fn post<T: DeserializeOwned>(&self, path: &str, body: &Value) -> Result<T> {
        let resp = self.http.post(format!("{}{path}", self.base_url)).json(body).send().await?;
        Self::decode(resp).await
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        let resp = self.http.get(format!("{}{path}", self.base_url)).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn write_fixture_dataset(&self, out: &Path) -> Result<Value> {
        self.post("/api/dataset/fixture", &json!({"out": out})).await
    }

    pub async fn ingest(&self, dataset: &Path, bank_dir: Option<&Path>) -> Result<IngestReply> {
        self.post("/api/ingest", &json!({"dataset": dataset, "bank_dir": bank_dir})).await
    }

    pub async fn embed(&self, bank_dir: &Path) -> Result<EmbedReply> {
        self.post("/api/embed", &json!({"bank_dir": bank_dir})).await
    }

    pub async fn banks(&self) -> Result<Vec<BankSummary>> {
        self.get("/api/banks").await
    }

    pub async fn search(
        &self,
        conversation_id: &str,
        mode: SearchMode,
        params: &SearchParams,
    ) -> Result<SearchReply> {
        let mut body = serde_json::to_value(params)?;
        body["conversation_id"] = json!(conversation_id);
        body["mode"] = serde_json::to_value(mode)?;
        self.post("/api/search", &body).await
    }

    pub async fn episode(&self, question_id: &str, with_reward: bool) -> Result<EpisodeReply> {
        self.post("/api/episode", &json!({"question_id": question_id, "with_reward": with_reward}))
            .await
    }

    pub async fn rollout(&self, question_id: &str, group_size: Option<usize>) -> Result<RolloutGroup> {
        self.post("/api/rollout", &json!({"question_id": question_id, "group_size": group_size}))
            .await
    }

    pub async fn advantages(&self, rewards: &[f64], epsilon_std: Option<f64>) -> Result<Vec<f64>> {
        let v: Value = self
            .post("/api/grpo/advantages", &json!({"rewards": rewards, "epsilon_std": epsilon_std}))
            .await?;
        Ok(serde_json::from_value(v["advantages"].clone())?)
    }

    pub async fn objective(&self, batch: &GrpoBatch) -> Result<GrpoOutcome> {
        self.post("/api/grpo/objective", &serde_json::to_value(batch)?).await
    }

    pub async fn train(&self) -> Result<TrainOutcome> {
        self.post("/api/train", &json!({})).await
    }

    pub async fn eval(&self) -> Result<EvalOutcome> {
        self.post("/api/eval", &json!({})).await
    }

    pub async fn compare(&self, reports: &[EvalReport]) -> Result<CompareReply> {
        self.post("/api/report/compare", &json!({"reports": reports})).await
    }
}
