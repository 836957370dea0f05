//! Run configuration: dataset and bank locations, backend endpoints, episode
//! and GRPO hyperparameters, and the config hash embedded in every output
//! artifact.
//!
//! Backend endpoints accept either a real HTTP base URL or an offline
//! scheme: `scripted:<path>` for the policy, `hashing:` for the embedder,
//! and `fixture:<path>` / `heuristic:` for the judge. Offline backends make
//! dry runs and tests fully self-contained.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    CachedEmbedder, EmbeddingBackend, FixtureJudge, HashingEmbedder, HttpEmbedder, HttpJudge,
    HttpPolicy, HttpSettings, JudgeBackend, PolicyBackend, ScriptedPolicy,
};
use crate::episode::EpisodeConfig;
use crate::error::{Error, Result};
use crate::memory::DEFAULT_EMBEDDING_DIM;

/// GRPO hyperparameters. Defaults mirror the training setup: G=8 rollouts,
/// batch size 32, clip high 0.28, validation every 50 steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_low: f64,
    pub clip_high: f64,
    pub epsilon_std: f64,
    pub batch_size: usize,
    pub validate_every: u64,
    pub steps: u64,
    /// Run a validation pass before the first step.
    pub initial_validation: bool,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_low: crate::rlvr::DEFAULT_CLIP_LOW,
            clip_high: crate::rlvr::DEFAULT_CLIP_HIGH,
            epsilon_std: crate::rlvr::DEFAULT_EPSILON_STD,
            batch_size: 32,
            validate_every: 50,
            steps: 400,
            initial_validation: true,
        }
    }
}

/// Complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub bank_dir: PathBuf,
    pub out_dir: PathBuf,

    pub policy_url: String,
    pub policy_model: String,
    pub embed_url: String,
    pub embed_model: String,
    pub embedding_dimension: usize,
    pub judge_url: String,
    pub judge_model: String,

    /// Optional external weight-update endpoint; absent means dry-run
    /// training (objective computed and logged, no update call).
    pub trainer_url: Option<String>,

    pub episode: EpisodeConfig,
    pub grpo: GrpoConfig,

    pub split_seed: u64,
    pub n_train: usize,
    pub shard_count: usize,
    /// Bound on concurrently running episodes.
    pub parallelism: usize,

    pub request_timeout_secs: u64,
    pub max_retries: u32,
    pub max_in_flight: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            bank_dir: PathBuf::from("banks"),
            out_dir: PathBuf::from("out"),
            policy_url: "http://127.0.0.1:8000/v1".into(),
            policy_model: "Qwen2.5-7B-Instruct".into(),
            embed_url: "hashing:".into(),
            embed_model: "Qwen3-Embedding-0.6B".into(),
            embedding_dimension: DEFAULT_EMBEDDING_DIM,
            judge_url: "heuristic:".into(),
            judge_model: "gpt-oss-120b".into(),
            trainer_url: None,
            episode: EpisodeConfig::default(),
            grpo: GrpoConfig::default(),
            split_seed: 42,
            n_train: 1,
            shard_count: crate::memory::DEFAULT_SHARD_COUNT,
            parallelism: 8,
            request_timeout_secs: 120,
            max_retries: 3,
            max_in_flight: 8,
        }
    }
}

impl RunConfig {
    /// Stable 16-hex-digit digest of the experiment-defining configuration;
    /// artifacts carry it and refuse to mix with artifacts from other
    /// configurations.
    ///
    /// Operational knobs (paths, step count, parallelism, timeouts) stay out
    /// of the hash: moving artifacts or training longer is the same
    /// experiment.
    pub fn hash(&self) -> String {
        let view = serde_json::json!({
            "policy": [&self.policy_url, &self.policy_model],
            "embed": [&self.embed_url, &self.embed_model, self.embedding_dimension],
            "judge": [&self.judge_url, &self.judge_model],
            "trainer": &self.trainer_url,
            "episode": &self.episode,
            "group_size": self.grpo.group_size,
            "clip": [self.grpo.clip_low, self.grpo.clip_high],
            "epsilon_std": self.grpo.epsilon_std,
            "batch_size": self.grpo.batch_size,
            "validate_every": self.grpo.validate_every,
            "split": [self.split_seed, self.n_train],
            "shards": self.shard_count,
        });
        let canonical = serde_json::to_vec(&view).expect("config serializes");
        hex::encode(&Sha256::digest(&canonical)[..8])
    }

    fn http_settings(&self, base_url: &str, model: &str, key_env: &str) -> HttpSettings {
        let mut settings = HttpSettings::new(base_url, model);
        settings.api_key = std::env::var(key_env).ok();
        settings.timeout = Duration::from_secs(self.request_timeout_secs);
        settings.max_retries = self.max_retries;
        settings.max_in_flight = self.max_in_flight;
        settings
    }

    /// Builds the policy backend from `policy_url`.
    pub fn build_policy(&self) -> Result<Arc<dyn PolicyBackend>> {
        if let Some(path) = self.policy_url.strip_prefix("scripted:") {
            return Ok(Arc::new(ScriptedPolicy::from_file(std::path::Path::new(path))?));
        }
        require_http(&self.policy_url, "policy_url")?;
        Ok(Arc::new(HttpPolicy::new(self.http_settings(
            &self.policy_url,
            &self.policy_model,
            "MEMSEARCH_POLICY_API_KEY",
        ))?))
    }

    /// Builds the embedding backend from `embed_url`, wrapped in the
    /// content-hash cache.
    pub fn build_embedder(&self) -> Result<Arc<dyn EmbeddingBackend>> {
        let inner: Arc<dyn EmbeddingBackend> = if self.embed_url.starts_with("hashing:") {
            Arc::new(HashingEmbedder::new(self.embedding_dimension))
        } else {
            require_http(&self.embed_url, "embed_url")?;
            Arc::new(HttpEmbedder::new(
                self.http_settings(&self.embed_url, &self.embed_model, "MEMSEARCH_EMBED_API_KEY"),
                self.embedding_dimension,
            )?)
        };
        Ok(Arc::new(CachedEmbedder::new(inner)))
    }

    /// Builds the judge backend from `judge_url`.
    pub fn build_judge(&self) -> Result<Arc<dyn JudgeBackend>> {
        if self.judge_url.starts_with("heuristic:") {
            return Ok(Arc::new(FixtureJudge::heuristic()));
        }
        if let Some(path) = self.judge_url.strip_prefix("fixture:") {
            return Ok(Arc::new(FixtureJudge::from_file(std::path::Path::new(path))?));
        }
        require_http(&self.judge_url, "judge_url")?;
        Ok(Arc::new(HttpJudge::new(self.http_settings(
            &self.judge_url,
            &self.judge_model,
            "MEMSEARCH_JUDGE_API_KEY",
        ))?))
    }
}

fn require_http(url: &str, field: &str) -> Result<()> {
    if url.starts_with("http://") || url.starts_with("https://") {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "{field} {url:?} is neither an http(s) URL nor a recognized offline scheme"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_training_table() {
        let c = RunConfig::default();
        assert_eq!(c.grpo.group_size, 8);
        assert_eq!(c.grpo.batch_size, 32);
        assert_eq!(c.grpo.clip_high, 0.28);
        assert_eq!(c.grpo.validate_every, 50);
        assert_eq!(c.episode.max_turns, 20);
        assert_eq!(c.episode.max_parallel_calls, 5);
        assert_eq!(c.episode.prompt_token_budget, 8192);
        assert_eq!(c.episode.response_token_budget, 24576);
        assert_eq!(c.episode.temperature, 1.0);
        assert_eq!(c.embedding_dimension, 1024);
        assert_eq!(c.shard_count, 32);
        assert_eq!(c.split_seed, 42);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        let mut c = RunConfig::default();
        c.grpo.clip_high = 0.3;
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn operational_knobs_do_not_change_the_hash() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.grpo.steps = 9999;
        b.out_dir = PathBuf::from("elsewhere");
        b.parallelism = 1;
        b.request_timeout_secs = 5;
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn offline_backend_schemes_build() {
        let mut c = RunConfig::default();
        c.embed_url = "hashing:".into();
        c.judge_url = "heuristic:".into();
        assert!(c.build_embedder().is_ok());
        assert!(c.build_judge().is_ok());
        c.policy_url = "not-a-url".into();
        assert!(c.build_policy().is_err());
    }
}
