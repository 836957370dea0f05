//! The training step loop: sample a batch of questions, roll out G
//! trajectories each, score rewards, standardize advantages, assemble GRPO
//! batches, hand them to an external update endpoint, and log summaries.
//! Validation interleaves every N steps with greedy decoding.
//!
//! Weight updates are not performed here; without an update endpoint the
//! loop is a dry run that still computes the full objective.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{EmbeddingBackend, JudgeBackend, PolicyBackend};
use crate::config::RunConfig;
use crate::corpus::QAItem;
use crate::episode::{EpisodeEngine, Trajectory};
use crate::error::{Error, Result};
use crate::evalh::{evaluate, EvalOutcome, RunMetadata};
use crate::memory::MemoryBank;
use crate::rlvr::{assemble_training_step, compute_reward, RewardBreakdown, RolloutGroup, StepSummary};

/// Prepared data for a training run.
pub struct TrainInputs {
    /// Banks keyed by conversation id; must cover both question sets.
    pub banks: HashMap<String, Arc<MemoryBank>>,
    pub train_questions: Vec<QAItem>,
    pub val_questions: Vec<QAItem>,
}

/// One point of the validation time series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValPoint {
    pub step: u64,
    pub f1: f64,
    pub bleu1: f64,
    pub judge: f64,
    pub mean_turns: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub summaries: Vec<StepSummary>,
    pub val_points: Vec<ValPoint>,
}

/// Step checkpoint metadata; resuming continues the step numbering and
/// refuses a changed configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainState {
    next_step: u64,
    config_hash: String,
}

pub struct Trainer {
    config: RunConfig,
    config_hash: String,
    inputs: TrainInputs,
    policy: Arc<dyn PolicyBackend>,
    embedder: Arc<dyn EmbeddingBackend>,
    judge: Arc<dyn JudgeBackend>,
    http: reqwest::Client,
}

impl Trainer {
    pub fn new(
        config: RunConfig,
        inputs: TrainInputs,
        policy: Arc<dyn PolicyBackend>,
        embedder: Arc<dyn EmbeddingBackend>,
        judge: Arc<dyn JudgeBackend>,
    ) -> Result<Self> {
        if inputs.train_questions.is_empty() {
            return Err(Error::Validation("no training questions".into()));
        }
        let config_hash = config.hash();
        Ok(Self {
            config,
            config_hash,
            inputs,
            policy,
            embedder,
            judge,
            http: reqwest::Client::new(),
        })
    }

    /// Verifies the policy backend can score and tokenize before step 1.
    async fn preflight(&self) -> Result<()> {
        if !self.policy.supports_score() {
            return Err(Error::Capability("policy backend cannot score token streams".into()));
        }
        let probe = self.policy.tokenize("capability probe").await?;
        self.policy.score(&[], &probe).await?;
        Ok(())
    }

    /// Runs the loop from the checkpointed step to `config.grpo.steps`.
    pub async fn run(&self) -> Result<TrainOutcome> {
        self.preflight().await?;
        std::fs::create_dir_all(&self.config.out_dir)?;

        let state_path = self.config.out_dir.join("train_state.json");
        let start = match read_state(&state_path)? {
            Some(state) => {
                if state.config_hash != self.config_hash {
                    return Err(Error::ConfigMismatch(format!(
                        "checkpoint was written by config {}, current is {}",
                        state.config_hash, self.config_hash
                    )));
                }
                state.next_step
            }
            None => 1,
        };

        let mut summaries = Vec::new();
        let mut val_points = Vec::new();

        if start == 1 && self.config.grpo.initial_validation && !self.inputs.val_questions.is_empty()
        {
            val_points.push(self.validate(0).await?);
        }

        for step in start..=self.config.grpo.steps {
            let summary = self.train_step(step).await?;
            append_jsonl(&self.config.out_dir.join("train_log.jsonl"), &summary)?;
            tracing::info!(
                step,
                mean_reward = summary.mean_reward,
                clip_fraction = summary.clip_fraction,
                mean_turns = summary.mean_turns,
                "step complete"
            );
            summaries.push(summary);
            write_state(&state_path, &TrainState { next_step: step + 1, config_hash: self.config_hash.clone() })?;

            if self.config.grpo.validate_every > 0
                && step % self.config.grpo.validate_every == 0
                && !self.inputs.val_questions.is_empty()
            {
                val_points.push(self.validate(step).await?);
            }
        }

        Ok(TrainOutcome { summaries, val_points })
    }

    /// One GRPO step over `batch_size / G` sampled questions.
    async fn train_step(&self, step: u64) -> Result<StepSummary> {
        let grpo = &self.config.grpo;
        let q_count = (grpo.batch_size / grpo.group_size).max(1);
        let questions = self.sample_questions(step, q_count);

        let mut groups: Vec<RolloutGroup> = Vec::with_capacity(questions.len());
        for qa in &questions {
            let bank = self
                .inputs
                .banks
                .get(&qa.conversation_id)
                .ok_or_else(|| Error::NotFound(format!("bank for {}", qa.conversation_id)))?
                .clone();
            let engine = EpisodeEngine::new(
                bank,
                self.policy.clone(),
                self.embedder.clone(),
                self.config.episode.clone(),
            )?;

            // G rollouts with bounded concurrency; `buffered` keeps results
            // in rollout order regardless of completion order.
            let trajectories: Vec<Result<Trajectory>> =
                stream::iter((0..grpo.group_size).map(|_| engine.run_episode(qa)))
                    .buffered(self.config.parallelism.max(1))
                    .collect()
                    .await;

            let mut scored: Vec<(Trajectory, RewardBreakdown)> = Vec::new();
            for trajectory in trajectories {
                let trajectory = trajectory?;
                match compute_reward(&trajectory, qa, self.judge.as_ref()).await {
                    Ok(reward) => scored.push((trajectory, reward)),
                    Err(Error::JudgeFailure(msg)) => {
                        tracing::warn!(
                            question = %qa.question_id,
                            error = %msg,
                            "judge failed; dropping rollout and shrinking the group"
                        );
                    }
                    Err(other) => return Err(other),
                }
            }
            if scored.len() < 2 {
                tracing::warn!(
                    question = %qa.question_id,
                    kept = scored.len(),
                    "fewer than 2 scoreable rollouts; dropping the whole group"
                );
                continue;
            }
            for (trajectory, reward) in &scored {
                append_jsonl(
                    &self.config.out_dir.join("trajectories.jsonl"),
                    &serde_json::json!({
                        "step": step,
                        "trajectory": trajectory,
                        "reward": reward,
                    }),
                )?;
            }
            groups.push(RolloutGroup::new(qa.question_id.clone(), scored, grpo.epsilon_std));
        }

        if groups.is_empty() {
            return Err(Error::Validation(format!(
                "step {step}: every rollout group was dropped; nothing to train on"
            )));
        }

        let training_step =
            assemble_training_step(step, &groups, self.policy.as_ref(), grpo.clip_low, grpo.clip_high)
                .await?;

        if let Some(trainer_url) = &self.config.trainer_url {
            self.push_update(trainer_url, &training_step).await?;
        }
        Ok(training_step.summary)
    }

    /// Deterministic per-step question sample, without replacement.
    fn sample_questions(&self, step: u64, count: usize) -> Vec<QAItem> {
        let mut rng =
            ChaCha8Rng::seed_from_u64(self.config.split_seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut pool: Vec<&QAItem> = self.inputs.train_questions.iter().collect();
        pool.shuffle(&mut rng);
        pool.into_iter().take(count.min(self.inputs.train_questions.len())).cloned().collect()
    }

    /// Hands the assembled batches to the external update endpoint.
    async fn push_update(&self, trainer_url: &str, step: &crate::rlvr::TrainingStep) -> Result<()> {
        let url = format!("{}/update", trainer_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "step": step.step,
            "config_hash": self.config_hash,
            "batches": step.batches,
        });
        let resp = self
            .http
            .post(&url)
            .json(&body)
            .send()
            .await
            .map_err(|e| Error::Backend(format!("{url}: {e}")))?;
        if !resp.status().is_success() {
            return Err(Error::Backend(format!("{url}: {}", resp.status())));
        }
        let reply: serde_json::Value = resp.json().await.unwrap_or_default();
        if let Some(version) = reply.get("policy_version").and_then(|v| v.as_str()) {
            tracing::info!(step = step.step, policy_version = version, "weights updated");
        }
        Ok(())
    }

    /// Greedy validation pass; writes the per-step report and appends the
    /// time-series point.
    async fn validate(&self, step: u64) -> Result<ValPoint> {
        let metadata = RunMetadata {
            policy_model: self.config.policy_model.clone(),
            embed_model: self.config.embed_model.clone(),
            judge_model: self.config.judge_model.clone(),
            config_hash: self.config_hash.clone(),
            step: Some(step),
        };
        let outcome = evaluate(
            &self.inputs.banks,
            &self.inputs.val_questions,
            self.policy.clone(),
            self.embedder.clone(),
            self.judge.clone(),
            &self.config.episode,
            self.config.parallelism,
            metadata,
        )
        .await?;
        let dir = self.config.out_dir.join(format!("val/step-{step:04}"));
        std::fs::create_dir_all(&dir)?;
        write_report(&outcome, &dir)?;
        let report = &outcome.report;
        let point = ValPoint {
            step,
            f1: report.overall.f1,
            bleu1: report.overall.bleu1,
            judge: report.overall.judge,
            mean_turns: report.overall.mean_turns,
        };
        append_jsonl(&self.config.out_dir.join("val_log.jsonl"), &point)?;
        Ok(point)
    }
}

/// Writes `report.json`, `report.txt`, and `records.jsonl` into `dir`.
pub fn write_report(outcome: &EvalOutcome, dir: &Path) -> Result<()> {
    std::fs::write(dir.join("report.json"), serde_json::to_vec_pretty(&outcome.report)?)?;
    std::fs::write(dir.join("report.txt"), crate::evalh::render_report_table(&outcome.report))?;
    let mut records = std::fs::File::create(dir.join("records.jsonl"))?;
    for record in &outcome.records {
        serde_json::to_writer(&mut records, record)?;
        records.write_all(b"\n")?;
    }
    Ok(())
}

fn read_state(path: &Path) -> Result<Option<TrainState>> {
    if !path.exists() {
        return Ok(None);
    }
    let bytes = std::fs::read(path)?;
    Ok(Some(serde_json::from_slice(&bytes)?))
}

fn write_state(path: &Path, state: &TrainState) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(state)?)?;
    Ok(())
}

fn append_jsonl<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    serde_json::to_writer(&mut file, value)?;
    file.write_all(b"\n")?;
    Ok(())
}
