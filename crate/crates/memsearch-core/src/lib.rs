//! Goal-directed search over uncompressed conversational memory.
//!
//! The library keeps raw conversation messages in an append-only memory bank,
//! exposes semantic and keyword search tools over it, runs multi-turn
//! tool-calling episodes against a pluggable policy backend, scores final
//! answers with a verifiable composite reward (LLM judge x token F1), and
//! computes the group-relative clipped policy objective with multi-turn loss
//! masking. All model inference is delegated to external backends so every
//! algorithmic piece here is testable offline.

pub mod backends;
pub mod config;
pub mod corpus;
pub mod episode;
pub mod error;
pub mod evalh;
pub mod memory;
pub mod rlvr;
pub mod search;
pub mod train;

pub use error::{Error, Result};
