//! On-disk bank layout: `records.jsonl` + `embeddings.f32` + `manifest.json`.
//!
//! Metadata goes to JSONL so it stays streamable and diff-able; vectors go
//! to a flat little-endian f32 matrix whose row order matches the JSONL
//! order. The manifest pins dimension, counts, and content checksums.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::{MemoryBank, MemoryRecord};

pub const BANK_SCHEMA_VERSION: u32 = 1;

const RECORDS_FILE: &str = "records.jsonl";
const EMBEDDINGS_FILE: &str = "embeddings.f32";
const MANIFEST_FILE: &str = "manifest.json";

/// Bank directory manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BankManifest {
    pub schema_version: u32,
    pub dimension: usize,
    pub count: usize,
    /// Either 0 (metadata-only bank) or `count` (fully embedded).
    pub embedded_count: usize,
    pub shard_count: usize,
    pub conversation_ids: Vec<String>,
    pub records_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_sha256: Option<String>,
}

/// Writes the bank into `dir` (created if absent).
///
/// A bank must be either fully embedded or not embedded at all to persist;
/// a partially embedded bank is a transient in-memory state.
pub fn persist_bank(bank: &MemoryBank, dir: &Path) -> Result<BankManifest> {
    let embedded = bank.embedded_count();
    if embedded != 0 && embedded != bank.len() {
        return Err(Error::Validation(format!(
            "bank is partially embedded ({embedded}/{}); embed fully before persisting",
            bank.len()
        )));
    }
    std::fs::create_dir_all(dir)?;

    let mut records_bytes = Vec::new();
    for record in bank.records() {
        serde_json::to_writer(&mut records_bytes, record)?;
        records_bytes.push(b'\n');
    }
    std::fs::write(dir.join(RECORDS_FILE), &records_bytes)?;

    let embeddings_sha256 = if embedded == bank.len() && !bank.is_empty() {
        let mut buf = Vec::with_capacity(bank.len() * bank.dimension() * 4);
        for i in 0..bank.len() {
            let row = bank.embedding_at(i).expect("fully embedded");
            for &x in row {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        std::fs::write(dir.join(EMBEDDINGS_FILE), &buf)?;
        Some(sha256_hex(&buf))
    } else {
        None
    };

    let manifest = BankManifest {
        schema_version: BANK_SCHEMA_VERSION,
        dimension: bank.dimension(),
        count: bank.len(),
        embedded_count: if embeddings_sha256.is_some() { bank.len() } else { 0 },
        shard_count: bank.shard_count(),
        conversation_ids: bank.conversation_ids(),
        records_sha256: sha256_hex(&records_bytes),
        embeddings_sha256,
    };
    let mut f = std::fs::File::create(dir.join(MANIFEST_FILE))?;
    f.write_all(&serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Reads a bank directory back, verifying version, counts, and checksums.
pub fn load_bank(dir: &Path) -> Result<MemoryBank> {
    let manifest_bytes = std::fs::read(dir.join(MANIFEST_FILE))?;
    let manifest: BankManifest = serde_json::from_slice(&manifest_bytes)?;
    if manifest.schema_version != BANK_SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            found: manifest.schema_version,
            expected: BANK_SCHEMA_VERSION,
        });
    }

    let records_bytes = std::fs::read(dir.join(RECORDS_FILE))?;
    if sha256_hex(&records_bytes) != manifest.records_sha256 {
        return Err(Error::ChecksumMismatch { file: RECORDS_FILE.into() });
    }
    let mut records = Vec::with_capacity(manifest.count);
    for (n, line) in BufReader::new(records_bytes.as_slice()).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: MemoryRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            context: format!("{RECORDS_FILE} line {}", n + 1),
            message: e.to_string(),
        })?;
        records.push(record);
    }
    if records.len() != manifest.count {
        return Err(Error::Validation(format!(
            "manifest declares {} records, file holds {}",
            manifest.count,
            records.len()
        )));
    }

    let embeddings = if manifest.embedded_count > 0 {
        let bytes = std::fs::read(dir.join(EMBEDDINGS_FILE))?;
        let expected = (manifest.count * manifest.dimension * 4) as u64;
        if (bytes.len() as u64) < expected {
            return Err(Error::TruncatedEmbeddings { expected, found: bytes.len() as u64 });
        }
        if bytes.len() as u64 != expected {
            return Err(Error::Validation(format!(
                "embedding file holds {} bytes, expected {expected} for dimension {}",
                bytes.len(),
                manifest.dimension
            )));
        }
        if let Some(sum) = &manifest.embeddings_sha256 {
            if &sha256_hex(&bytes) != sum {
                return Err(Error::ChecksumMismatch { file: EMBEDDINGS_FILE.into() });
            }
        }
        let mut rows = Vec::with_capacity(manifest.count);
        for r in 0..manifest.count {
            let start = r * manifest.dimension * 4;
            let row: Vec<f32> = bytes[start..start + manifest.dimension * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            rows.push(Some(row));
        }
        rows
    } else {
        vec![None; manifest.count]
    };

    MemoryBank::from_parts(records, embeddings, manifest.dimension, manifest.shard_count)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Conversation, Message, Session};
    use std::collections::HashMap;

    fn small_conv() -> Conversation {
        Conversation {
            conversation_id: "c1".into(),
            speakers: ["A".into(), "B".into()],
            sessions: vec![Session {
                session_index: 1,
                timestamp: "noon".into(),
                messages: (1..=3)
                    .map(|m| Message {
                        speaker: if m % 2 == 1 { "A".into() } else { "B".into() },
                        text: format!("message {m}"),
                        message_index: m,
                        timestamp: "noon".into(),
                    })
                    .collect(),
            }],
        }
    }

    fn embedded_bank() -> MemoryBank {
        let conv = small_conv();
        let mut vectors = HashMap::new();
        for m in 1..=3u32 {
            vectors.insert(format!("c1/1/{m}"), vec![m as f32, -0.5, 0.25, 1e-7]);
        }
        MemoryBank::build(&[conv], Some(&vectors), 4, 2).unwrap()
    }

    #[test]
    fn round_trip_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let bank = embedded_bank();
        persist_bank(&bank, dir.path()).unwrap();
        let loaded = load_bank(dir.path()).unwrap();
        assert_eq!(loaded.len(), bank.len());
        assert_eq!(loaded.records(), bank.records());
        for r in bank.records() {
            assert_eq!(loaded.embedding(&r.record_id), bank.embedding(&r.record_id));
        }
    }

    #[test]
    fn round_trip_of_unembedded_and_empty_banks() {
        let dir = tempfile::tempdir().unwrap();
        let bank = MemoryBank::build(&[small_conv()], None, 4, 2).unwrap();
        persist_bank(&bank, dir.path()).unwrap();
        let loaded = load_bank(dir.path()).unwrap();
        assert_eq!(loaded.records(), bank.records());
        assert_eq!(loaded.embedded_count(), 0);

        let empty_dir = tempfile::tempdir().unwrap();
        let empty = MemoryBank::build(&[], None, 4, 2).unwrap();
        persist_bank(&empty, empty_dir.path()).unwrap();
        assert!(load_bank(empty_dir.path()).unwrap().is_empty());
    }

    #[test]
    fn truncated_embedding_file_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        persist_bank(&embedded_bank(), dir.path()).unwrap();
        let path = dir.path().join("embeddings.f32");
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        let err = load_bank(dir.path()).unwrap_err();
        assert!(matches!(err, Error::TruncatedEmbeddings { .. }), "{err}");
    }

    #[test]
    fn version_mismatch_is_a_distinct_error() {
        let dir = tempfile::tempdir().unwrap();
        persist_bank(&embedded_bank(), dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"schema_version\": 1", "\"schema_version\": 99");
        std::fs::write(&path, text).unwrap();
        let err = load_bank(dir.path()).unwrap_err();
        assert!(matches!(err, Error::VersionMismatch { found: 99, .. }), "{err}");
    }

    #[test]
    fn wrong_declared_dimension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        persist_bank(&embedded_bank(), dir.path()).unwrap();
        let path = dir.path().join("manifest.json");
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"dimension\": 4", "\"dimension\": 8");
        std::fs::write(&path, text).unwrap();
        assert!(load_bank(dir.path()).is_err());
    }

    #[test]
    fn corrupted_records_fail_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        persist_bank(&embedded_bank(), dir.path()).unwrap();
        let path = dir.path().join("records.jsonl");
        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("message 1", "message X");
        std::fs::write(&path, text).unwrap();
        let err = load_bank(dir.path()).unwrap_err();
        assert!(matches!(err, Error::ChecksumMismatch { .. }), "{err}");
    }

    #[test]
    fn partially_embedded_bank_refuses_to_persist() {
        let dir = tempfile::tempdir().unwrap();
        let mut bank = MemoryBank::build(&[small_conv()], None, 4, 2).unwrap();
        let mut one = HashMap::new();
        one.insert("c1/1/1".to_string(), vec![0.0_f32; 4]);
        bank.set_embeddings(&one).unwrap();
        assert!(persist_bank(&bank, dir.path()).is_err());
    }
}
