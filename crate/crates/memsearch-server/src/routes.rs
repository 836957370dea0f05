//! JSON endpoints, thin wrappers over the core library.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use memsearch_core::backends::Verdict;
use memsearch_core::config::RunConfig;
use memsearch_core::corpus::{
    split_dataset, write_fixture_dataset, write_normalized, Dataset, DatasetStats, FixtureSpec,
    QAItem,
};
use memsearch_core::episode::{EpisodeEngine, Trajectory};
use memsearch_core::error::Error;
use memsearch_core::evalh::{
    bleu1, compare_runs, render_delta_table, DeltaTable, EvalOutcome, EvalReport, RunMetadata,
};
use memsearch_core::memory::{persist_bank, MemoryBank};
use memsearch_core::rlvr::{
    compute_reward, group_advantages, grpo_objective, token_f1, GrpoBatch, GrpoOutcome,
    RewardBreakdown, RolloutGroup,
};
use memsearch_core::search::{
    format_tool_response, keyword_search, semantic_search, SearchFilters, SearchMode, SearchResult,
};
use memsearch_core::train::{write_report, TrainInputs, TrainOutcome, Trainer};

use crate::state::{load_dataset_any, AppState};

/// All routes of the service.
pub fn api_router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/api/config", get(config))
        .route("/api/dataset/fixture", post(dataset_fixture))
        .route("/api/ingest", post(ingest))
        .route("/api/embed", post(embed))
        .route("/api/banks", get(banks))
        .route("/api/search", post(search))
        .route("/api/episode", post(episode))
        .route("/api/rollout", post(rollout))
        .route("/api/grpo/advantages", post(advantages))
        .route("/api/grpo/objective", post(objective))
        .route("/api/metrics/answer", post(answer_metrics))
        .route("/api/judge", post(judge))
        .route("/api/train", post(train))
        .route("/api/eval", post(eval))
        .route("/api/report/compare", post(compare))
        .with_state(state)
}

/// Core errors mapped onto HTTP statuses with a JSON body.
struct ApiError(Error);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::NotFound(_) => StatusCode::NOT_FOUND,
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::DimensionMismatch { .. }
            | Error::VersionMismatch { .. }
            | Error::ConfigMismatch(_)
            | Error::Json(_) => StatusCode::BAD_REQUEST,
            Error::Capability(_) => StatusCode::CONFLICT,
            Error::Backend(_) | Error::JudgeFailure(_) | Error::ScriptExhausted(_) => {
                StatusCode::BAD_GATEWAY
            }
            Error::Io(_)
            | Error::TruncatedEmbeddings { .. }
            | Error::ChecksumMismatch { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": self.0.to_string()}))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        Self(e)
    }
}

type ApiResult<T> = std::result::Result<Json<T>, ApiError>;

async fn health(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "ok": true,
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": state.config_hash,
    }))
}

async fn config(State(state): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({"config": state.config, "config_hash": state.config_hash}))
}

#[derive(Deserialize)]
struct FixtureRequest {
    out: PathBuf,
    #[serde(default)]
    seed: Option<u64>,
}

async fn dataset_fixture(
    State(_): State<Arc<AppState>>,
    Json(req): Json<FixtureRequest>,
) -> ApiResult<serde_json::Value> {
    let mut spec = FixtureSpec::default();
    if let Some(seed) = req.seed {
        spec.seed = seed;
    }
    if let Some(parent) = req.out.parent() {
        std::fs::create_dir_all(parent).map_err(Error::from)?;
    }
    write_fixture_dataset(&spec, &req.out)?;
    Ok(Json(json!({"path": req.out})))
}

#[derive(Deserialize)]
struct IngestRequest {
    dataset: PathBuf,
    /// Root directory for per-conversation bank directories; defaults to
    /// the configured bank_dir.
    #[serde(default)]
    bank_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct IngestReply {
    normalized_path: PathBuf,
    bank_dirs: Vec<PathBuf>,
    stats: DatasetStats,
}

async fn ingest(
    State(state): State<Arc<AppState>>,
    Json(req): Json<IngestRequest>,
) -> ApiResult<IngestReply> {
    let dataset = load_dataset_any(&req.dataset)?;
    let bank_root = req.bank_dir.unwrap_or_else(|| state.config.bank_dir.clone());
    std::fs::create_dir_all(&bank_root).map_err(Error::from)?;

    let normalized_path = bank_root.join("normalized.jsonl");
    write_normalized(&dataset, &normalized_path)?;

    let mut bank_dirs = Vec::new();
    for entry in &dataset.entries {
        let conv = &entry.conversation;
        let bank = MemoryBank::build(
            std::slice::from_ref(conv),
            None,
            state.config.embedding_dimension,
            state.config.shard_count,
        )?;
        let dir = bank_root.join(&conv.conversation_id);
        persist_bank(&bank, &dir)?;
        state
            .banks
            .write()
            .await
            .insert(conv.conversation_id.clone(), Arc::new(bank));
        bank_dirs.push(dir);
    }
    let stats = dataset.stats();
    state.set_dataset(Arc::new(dataset)).await;
    Ok(Json(IngestReply { normalized_path, bank_dirs, stats }))
}

#[derive(Deserialize)]
struct EmbedRequest {
    bank_dir: PathBuf,
    /// Records per embedding request.
    #[serde(default = "default_embed_batch")]
    batch_size: usize,
}

fn default_embed_batch() -> usize {
    64
}

#[derive(Serialize)]
struct EmbedReply {
    conversation_id: String,
    records: usize,
    newly_embedded: usize,
    dimension: usize,
}

async fn embed(
    State(state): State<Arc<AppState>>,
    Json(req): Json<EmbedRequest>,
) -> ApiResult<EmbedReply> {
    let (id, bank) = state.load_bank_dir(&req.bank_dir).await?;
    let mut bank = (*bank).clone();
    let pending = bank.unembedded_ids();
    for chunk in pending.chunks(req.batch_size.max(1)) {
        let texts: Vec<String> = chunk
            .iter()
            .map(|rid| bank.record(rid).expect("listed id exists").content.clone())
            .collect();
        let vectors = state.embedder.embed(&texts).await?;
        let map: HashMap<String, Vec<f32>> =
            chunk.iter().cloned().zip(vectors).collect();
        bank.set_embeddings(&map)?;
    }
    persist_bank(&bank, &req.bank_dir)?;
    let reply = EmbedReply {
        conversation_id: id.clone(),
        records: bank.len(),
        newly_embedded: pending.len(),
        dimension: bank.dimension(),
    };
    state.banks.write().await.insert(id, Arc::new(bank));
    Ok(Json(reply))
}

#[derive(Serialize)]
struct BankSummary {
    conversation_id: String,
    records: usize,
    embedded: usize,
    dimension: usize,
}

async fn banks(State(state): State<Arc<AppState>>) -> Json<Vec<BankSummary>> {
    let banks = state.banks.read().await;
    let mut out: Vec<BankSummary> = banks
        .iter()
        .map(|(id, b)| BankSummary {
            conversation_id: id.clone(),
            records: b.len(),
            embedded: b.embedded_count(),
            dimension: b.dimension(),
        })
        .collect();
    out.sort_by(|a, b| a.conversation_id.cmp(&b.conversation_id));
    Json(out)
}

#[derive(Deserialize)]
struct SearchRequest {
    conversation_id: String,
    mode: SearchMode,
    #[serde(default)]
    query: Option<String>,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    top_k: Option<usize>,
    #[serde(default)]
    speaker: Option<String>,
    #[serde(default)]
    session: Option<u32>,
    /// Context radius override (0 disables groups).
    #[serde(default)]
    group_radius: Option<usize>,
}

#[derive(Serialize)]
struct SearchReply {
    result: SearchResult,
    /// The exact tool-response text an agent would see (sans turn counter).
    formatted: String,
}

async fn search(
    State(state): State<Arc<AppState>>,
    Json(req): Json<SearchRequest>,
) -> ApiResult<SearchReply> {
    let bank = state.bank(&req.conversation_id).await?;
    let filters = SearchFilters { speaker: req.speaker, session: req.session };
    let radius = req.group_radius.unwrap_or(memsearch_core::search::DEFAULT_GROUP_RADIUS);
    let result = match req.mode {
        SearchMode::Semantic => {
            let query = req.query.ok_or_else(|| {
                Error::Validation("semantic search requires `query`".into())
            })?;
            let embedded = state.embedder.embed(&[query]).await?;
            semantic_search(
                &bank,
                &embedded[0],
                req.top_k.unwrap_or(state.config.episode.default_top_k),
                &filters,
                radius,
            )?
        }
        SearchMode::Keyword => keyword_search(
            &bank,
            &req.keywords,
            &filters,
            req.top_k.unwrap_or(state.config.episode.keyword_cap),
            radius,
        )?,
    };
    let formatted = format_tool_response(&result, state.config.episode.max_turns);
    Ok(Json(SearchReply { result, formatted }))
}

#[derive(Deserialize)]
struct EpisodeRequest {
    question_id: String,
    /// Score the finished trajectory with the judge.
    #[serde(default)]
    with_reward: bool,
    /// Override the configured sampling temperature.
    #[serde(default)]
    temperature: Option<f64>,
}

#[derive(Serialize)]
struct EpisodeReply {
    trajectory: Trajectory,
    #[serde(skip_serializing_if = "Option::is_none")]
    reward: Option<RewardBreakdown>,
}

async fn find_question(state: &AppState, question_id: &str) -> Result<QAItem, Error> {
    let dataset = state.dataset().await?;
    dataset
        .entries
        .iter()
        .flat_map(|e| &e.qa)
        .find(|q| q.question_id == question_id)
        .cloned()
        .ok_or_else(|| Error::NotFound(format!("question {question_id}")))
}

async fn episode(
    State(state): State<Arc<AppState>>,
    Json(req): Json<EpisodeRequest>,
) -> ApiResult<EpisodeReply> {
    let qa = find_question(&state, &req.question_id).await?;
    let bank = state.bank(&qa.conversation_id).await?;
    let mut config = state.config.episode.clone();
    if let Some(t) = req.temperature {
        config.temperature = t;
    }
    let engine = EpisodeEngine::new(bank, state.policy.clone(), state.embedder.clone(), config)?;
    let trajectory = engine.run_episode(&qa).await?;
    let reward = if req.with_reward {
        Some(compute_reward(&trajectory, &qa, state.judge.as_ref()).await?)
    } else {
        None
    };
    Ok(Json(EpisodeReply { trajectory, reward }))
}

#[derive(Deserialize)]
struct RolloutRequest {
    question_id: String,
    #[serde(default)]
    group_size: Option<usize>,
}

async fn rollout(
    State(state): State<Arc<AppState>>,
    Json(req): Json<RolloutRequest>,
) -> ApiResult<RolloutGroup> {
    let qa = find_question(&state, &req.question_id).await?;
    let bank = state.bank(&qa.conversation_id).await?;
    let engine = EpisodeEngine::new(
        bank,
        state.policy.clone(),
        state.embedder.clone(),
        state.config.episode.clone(),
    )?;
    let g = req.group_size.unwrap_or(state.config.grpo.group_size);
    let mut rollouts = Vec::with_capacity(g);
    for _ in 0..g {
        let trajectory = engine.run_episode(&qa).await?;
        let reward = compute_reward(&trajectory, &qa, state.judge.as_ref()).await?;
        rollouts.push((trajectory, reward));
    }
    Ok(Json(RolloutGroup::new(qa.question_id.clone(), rollouts, state.config.grpo.epsilon_std)))
}

#[derive(Deserialize)]
struct AdvantageRequest {
    rewards: Vec<f64>,
    #[serde(default)]
    epsilon_std: Option<f64>,
}

async fn advantages(Json(req): Json<AdvantageRequest>) -> Json<serde_json::Value> {
    let eps = req.epsilon_std.unwrap_or(memsearch_core::rlvr::DEFAULT_EPSILON_STD);
    Json(json!({"advantages": group_advantages(&req.rewards, eps)}))
}

async fn objective(Json(batch): Json<GrpoBatch>) -> ApiResult<GrpoOutcome> {
    Ok(Json(grpo_objective(&batch)?))
}

#[derive(Deserialize)]
struct AnswerMetricsRequest {
    predicted: String,
    gold: String,
}

async fn answer_metrics(Json(req): Json<AnswerMetricsRequest>) -> Json<serde_json::Value> {
    Json(json!({
        "f1": token_f1(&req.predicted, &req.gold),
        "bleu1": bleu1(&req.predicted, &req.gold),
    }))
}

#[derive(Deserialize)]
struct JudgeRequest {
    question: String,
    gold: String,
    generated: String,
}

async fn judge(
    State(state): State<Arc<AppState>>,
    Json(req): Json<JudgeRequest>,
) -> ApiResult<serde_json::Value> {
    let verdict = state.judge.judge(&req.question, &req.gold, &req.generated).await?;
    Ok(Json(json!({"verdict": verdict, "score": matches!(verdict, Verdict::Correct) as u8})))
}

/// Splits the dataset, loads all banks, and partitions questions.
async fn prepare_inputs(
    state: &AppState,
    config: &RunConfig,
) -> Result<TrainInputs, Error> {
    let dataset: Arc<Dataset> = state.dataset().await?;
    let split = split_dataset(&dataset.conversation_ids(), config.split_seed, config.n_train)?;
    let mut banks = HashMap::new();
    for id in dataset.conversation_ids() {
        banks.insert(id.clone(), state.bank(&id).await?);
    }
    let questions = |ids: &[String]| -> Vec<QAItem> {
        dataset
            .entries
            .iter()
            .filter(|e| ids.contains(&e.conversation.conversation_id))
            .flat_map(|e| e.qa.iter().cloned())
            .filter(|q| !q.excluded_from_eval)
            .collect()
    };
    Ok(TrainInputs {
        banks,
        train_questions: questions(&split.train_conversations),
        val_questions: questions(&split.validation_conversations),
    })
}

fn metadata_for(state: &AppState, step: Option<u64>) -> RunMetadata {
    RunMetadata {
        policy_model: state.config.policy_model.clone(),
        embed_model: state.config.embed_model.clone(),
        judge_model: state.config.judge_model.clone(),
        config_hash: state.config_hash.clone(),
        step,
    }
}

async fn train(State(state): State<Arc<AppState>>) -> ApiResult<TrainOutcome> {
    let inputs = prepare_inputs(&state, &state.config).await?;
    let trainer = Trainer::new(
        state.config.clone(),
        inputs,
        state.policy.clone(),
        state.embedder.clone(),
        state.judge.clone(),
    )?;
    Ok(Json(trainer.run().await?))
}

async fn eval(State(state): State<Arc<AppState>>) -> ApiResult<EvalOutcome> {
    let inputs = prepare_inputs(&state, &state.config).await?;
    let outcome = memsearch_core::evalh::evaluate(
        &inputs.banks,
        &inputs.val_questions,
        state.policy.clone(),
        state.embedder.clone(),
        state.judge.clone(),
        &state.config.episode,
        state.config.parallelism,
        metadata_for(&state, None),
    )
    .await?;
    let dir = state.config.out_dir.join("eval");
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    write_report(&outcome, &dir)?;
    Ok(Json(outcome))
}

#[derive(Deserialize)]
struct CompareRequest {
    reports: Vec<EvalReport>,
}

#[derive(Serialize)]
struct CompareReply {
    table: DeltaTable,
    rendered: String,
}

async fn compare(Json(req): Json<CompareRequest>) -> ApiResult<CompareReply> {
    let table = compare_runs(&req.reports)?;
    let rendered = render_delta_table(&table);
    Ok(Json(CompareReply { table, rendered }))
}
