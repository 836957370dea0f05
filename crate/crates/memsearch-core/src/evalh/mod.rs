//! Greedy single-trajectory validation over held-out conversations:
//! per-question records, per-category and overall F1 / BLEU-1 / judge
//! means, and run-to-run delta tables.

mod bleu;
mod compare;

pub use bleu::bleu1;
pub use compare::{compare_runs, render_delta_table, DeltaRow, DeltaTable};

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use crate::backends::{EmbeddingBackend, JudgeBackend, PolicyBackend, Verdict};
use crate::corpus::{CategoryLabel, QAItem};
use crate::episode::{EpisodeConfig, EpisodeEngine, TerminalState};
use crate::error::{Error, Result};
use crate::memory::MemoryBank;
use crate::rlvr::token_f1;

/// Per-question evaluation record. Non-submitted episodes score all zeros
/// and stay in the denominator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub category_label: CategoryLabel,
    pub predicted_answer: Option<String>,
    pub terminal: TerminalState,
    pub f1: f64,
    pub bleu1: f64,
    pub judge: u8,
    pub n_turns: u32,
}

/// Aggregate metrics for one question subset, on the x100 scale.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub count: usize,
    pub f1: f64,
    pub bleu1: f64,
    pub judge: f64,
    pub mean_turns: f64,
}

/// Identity of the run a report came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub policy_model: String,
    pub embed_model: String,
    pub judge_model: String,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

/// The full evaluation report: per-category and question-weighted overall
/// means over non-adversarial questions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub metadata: RunMetadata,
    pub per_category: Vec<(CategoryLabel, MetricRow)>,
    pub overall: MetricRow,
    /// Sorted ids of the questions that were scored.
    pub question_ids: Vec<String>,
    /// Questions that hit infrastructure failures, excluded from the
    /// aggregates above. A non-empty list marks the run incomplete.
    pub failures: Vec<(String, String)>,
}

impl EvalReport {
    pub fn complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Evaluation result: the aggregate report plus the per-question records
/// behind it (persisted as `records.jsonl` for drill-down).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub records: Vec<EvalRecord>,
}

/// Aggregates records into a report. Pure; `evaluate` orchestrates episodes
/// and then calls this.
pub fn aggregate(
    records: &[EvalRecord],
    failures: Vec<(String, String)>,
    metadata: RunMetadata,
) -> EvalReport {
    let row = |subset: &[&EvalRecord]| {
        let n = subset.len();
        if n == 0 {
            return MetricRow::default();
        }
        MetricRow {
            count: n,
            f1: subset.iter().map(|r| r.f1).sum::<f64>() / n as f64 * 100.0,
            bleu1: subset.iter().map(|r| r.bleu1).sum::<f64>() / n as f64 * 100.0,
            judge: subset.iter().map(|r| f64::from(r.judge)).sum::<f64>() / n as f64 * 100.0,
            mean_turns: subset.iter().map(|r| f64::from(r.n_turns)).sum::<f64>() / n as f64,
        }
    };

    let per_category = CategoryLabel::EVAL_ORDER
        .iter()
        .map(|label| {
            let subset: Vec<&EvalRecord> =
                records.iter().filter(|r| r.category_label == *label).collect();
            (*label, row(&subset))
        })
        .collect();
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut question_ids: Vec<String> = records.iter().map(|r| r.question_id.clone()).collect();
    question_ids.sort();

    EvalReport { metadata, per_category, overall: row(&all), question_ids, failures }
}

/// Runs one greedy episode per non-adversarial question and aggregates.
///
/// Banks are keyed by conversation id; every question must have its bank.
/// Episodes run concurrently up to `parallelism`. Infrastructure failures
/// are recorded per question and never silently scored.
#[allow(clippy::too_many_arguments)]
pub async fn evaluate(
    banks: &HashMap<String, Arc<MemoryBank>>,
    questions: &[QAItem],
    policy: Arc<dyn PolicyBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    judge: Arc<dyn JudgeBackend>,
    episode_config: &EpisodeConfig,
    parallelism: usize,
    metadata: RunMetadata,
) -> Result<EvalOutcome> {
    // Greedy decoding, single trajectory per question.
    let mut config = episode_config.clone();
    config.temperature = 0.0;
    config.validate()?;

    let scored: Vec<&QAItem> = questions.iter().filter(|q| !q.excluded_from_eval).collect();
    for q in &scored {
        if !banks.contains_key(&q.conversation_id) {
            return Err(Error::NotFound(format!(
                "no bank for conversation {} (question {})",
                q.conversation_id, q.question_id
            )));
        }
    }

    let gate = Arc::new(Semaphore::new(parallelism.max(1)));
    let mut tasks = Vec::with_capacity(scored.len());
    for qa in scored {
        let bank = banks[&qa.conversation_id].clone();
        let engine =
            EpisodeEngine::new(bank, policy.clone(), embedder.clone(), config.clone())?;
        let judge = judge.clone();
        let qa = qa.clone();
        let gate = gate.clone();
        tasks.push(tokio::spawn(async move {
            let _permit = gate.acquire_owned().await.expect("semaphore closed");
            let outcome = run_one(&engine, &qa, judge.as_ref()).await;
            (qa, outcome)
        }));
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for task in tasks {
        let (qa, outcome) = task.await.map_err(|e| Error::Backend(e.to_string()))?;
        match outcome {
            Ok(record) => records.push(record),
            Err(e) => failures.push((qa.question_id.clone(), e.to_string())),
        }
    }
    records.sort_by(|a, b| a.question_id.cmp(&b.question_id));

    if !failures.is_empty() {
        tracing::warn!(
            failed = failures.len(),
            scored = records.len(),
            "evaluation incomplete: some questions hit infrastructure failures"
        );
    }
    let report = aggregate(&records, failures, metadata);
    Ok(EvalOutcome { report, records })
}

async fn run_one(
    engine: &EpisodeEngine,
    qa: &QAItem,
    judge: &dyn JudgeBackend,
) -> Result<EvalRecord> {
    let trajectory = engine.run_episode(qa).await?;
    let (f1, b1, verdict) = match &trajectory.final_answer {
        Some(answer) => {
            let verdict = judge.judge(&qa.question, &qa.gold_answer, answer).await?;
            (token_f1(answer, &qa.gold_answer), bleu1(answer, &qa.gold_answer), verdict)
        }
        None => (0.0, 0.0, Verdict::Wrong),
    };
    Ok(EvalRecord {
        question_id: qa.question_id.clone(),
        category_label: qa.category_label,
        predicted_answer: trajectory.final_answer.clone(),
        terminal: trajectory.terminal,
        f1,
        bleu1: b1,
        judge: if trajectory.submitted() { verdict.as_score() as u8 } else { 0 },
        n_turns: trajectory.n_turns(),
    })
}

/// Plain-text table with the per-category and overall rows.
pub fn render_report_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>6} {:>7} {:>7} {:>7} {:>7}\n",
        "category", "n", "F1", "B1", "J", "turns"
    ));
    for (label, row) in &report.per_category {
        out.push_str(&format!(
            "{:<12} {:>6} {:>7.2} {:>7.2} {:>7.2} {:>7.2}\n",
            label.as_str(),
            row.count,
            row.f1,
            row.bleu1,
            row.judge,
            row.mean_turns
        ));
    }
    let o = &report.overall;
    out.push_str(&format!(
        "{:<12} {:>6} {:>7.2} {:>7.2} {:>7.2} {:>7.2}\n",
        "overall", o.count, o.f1, o.bleu1, o.judge, o.mean_turns
    ));
    if !report.failures.is_empty() {
        out.push_str(&format!(
            "\nINCOMPLETE RUN: {} question(s) failed on infrastructure and are excluded.\n",
            report.failures.len()
        ));
    }
    out
}
