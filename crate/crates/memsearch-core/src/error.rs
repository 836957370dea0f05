//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    /// A file or payload failed to parse. Carries enough context to name
    /// the offending record.
    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    /// An invariant or precondition was violated.
    #[error("validation error: {0}")]
    Validation(String),

    /// A referenced entity does not exist.
    #[error("not found: {0}")]
    NotFound(String),

    /// Persisted bank declares a schema version this build does not read.
    #[error("bank version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    /// Embedding matrix on disk is shorter than the manifest declares.
    #[error("truncated embedding file: expected {expected} bytes, found {found}")]
    TruncatedEmbeddings { expected: u64, found: u64 },

    /// An embedding vector does not match the bank dimension.
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A checksum recorded in the manifest does not match the file contents.
    #[error("checksum mismatch for {file}")]
    ChecksumMismatch { file: String },

    /// A backend lacks a capability the caller requires (e.g. logprobs).
    #[error("backend capability missing: {0}")]
    Capability(String),

    /// Transport-level backend failure after the retry budget is spent.
    /// Episodes hit by this abort without a reward.
    #[error("backend error: {0}")]
    Backend(String),

    /// Judge infrastructure failed; the affected rollout must not be scored.
    #[error("judge failure: {0}")]
    JudgeFailure(String),

    /// A scripted policy ran out of steps.
    #[error("script exhausted: {0}")]
    ScriptExhausted(String),

    /// Mixing artifacts produced under different configurations.
    #[error("config hash mismatch: {0}")]
    ConfigMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
