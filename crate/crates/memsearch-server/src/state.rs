//! Shared service state: the configuration, backend clients, and the cache
//! of loaded memory banks.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use tokio::sync::RwLock;

use memsearch_core::backends::{EmbeddingBackend, JudgeBackend, PolicyBackend};
use memsearch_core::config::RunConfig;
use memsearch_core::corpus::Dataset;
use memsearch_core::error::{Error, Result};
use memsearch_core::memory::{load_bank, MemoryBank};

pub struct AppState {
    pub config: RunConfig,
    pub config_hash: String,
    pub policy: Arc<dyn PolicyBackend>,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub judge: Arc<dyn JudgeBackend>,
    pub banks: RwLock<HashMap<String, Arc<MemoryBank>>>,
    pub dataset: RwLock<Option<Arc<Dataset>>>,
}

impl AppState {
    pub fn new(config: RunConfig) -> Result<Self> {
        let config_hash = config.hash();
        let policy = config.build_policy()?;
        let embedder = config.build_embedder()?;
        let judge = config.build_judge()?;
        Ok(Self {
            config,
            config_hash,
            policy,
            embedder,
            judge,
            banks: RwLock::new(HashMap::new()),
            dataset: RwLock::new(None),
        })
    }

    /// The bank for a conversation, loading it from `bank_dir` on first use.
    pub async fn bank(&self, conversation_id: &str) -> Result<Arc<MemoryBank>> {
        if let Some(bank) = self.banks.read().await.get(conversation_id) {
            return Ok(bank.clone());
        }
        let dir = self.config.bank_dir.join(conversation_id);
        let bank = Arc::new(load_bank(&dir)?);
        self.banks.write().await.insert(conversation_id.to_string(), bank.clone());
        Ok(bank)
    }

    /// Loads a bank directly from a directory and caches it by conversation.
    pub async fn load_bank_dir(&self, dir: &Path) -> Result<(String, Arc<MemoryBank>)> {
        let bank = Arc::new(load_bank(dir)?);
        let ids = bank.conversation_ids();
        let id = ids
            .first()
            .cloned()
            .unwrap_or_else(|| dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        self.banks.write().await.insert(id.clone(), bank.clone());
        Ok((id, bank))
    }

    /// The dataset, loading it from the configured path on first use.
    pub async fn dataset(&self) -> Result<Arc<Dataset>> {
        if let Some(ds) = self.dataset.read().await.as_ref() {
            return Ok(ds.clone());
        }
        let path = self
            .config
            .dataset
            .as_ref()
            .ok_or_else(|| Error::Validation("no dataset configured; ingest first or set --dataset".into()))?;
        let ds = Arc::new(load_dataset_any(path)?);
        *self.dataset.write().await = Some(ds.clone());
        Ok(ds)
    }

    pub async fn set_dataset(&self, dataset: Arc<Dataset>) {
        *self.dataset.write().await = Some(dataset);
    }
}

/// Loads either the raw LoCoMo JSON layout or the normalized JSONL form,
/// sniffing by the first byte ('[' means raw JSON array).
pub fn load_dataset_any(path: &Path) -> Result<Dataset> {
    let head = std::fs::read(path).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let first = head.iter().find(|b| !b.is_ascii_whitespace()).copied().unwrap_or(b'[');
    if first == b'[' {
        memsearch_core::corpus::load_locomo_file(path)
    } else {
        memsearch_core::corpus::read_normalized(path)
    }
}
