//! The uncompressed memory bank: one record per conversation message, with
//! metadata, optional embeddings, and context-group assembly around
//! retrieved records.
//!
//! Banks are append-only at build time and immutable afterwards; any number
//! of concurrent readers may share one behind an `Arc`. Records are
//! partitioned into shards by id hash so search can fan out; sharding is an
//! internal layout detail and never changes results.

mod persist;

pub use persist::{load_bank, persist_bank, BankManifest, BANK_SCHEMA_VERSION};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Conversation;
use crate::error::{Error, Result};

/// Default embedding dimension of the bank.
pub const DEFAULT_EMBEDDING_DIM: usize = 1024;

/// Default shard count for search fan-out.
pub const DEFAULT_SHARD_COUNT: usize = 32;

/// One raw conversation message with metadata; the unit of storage and
/// retrieval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    /// Deterministic id: `<conversation_id>/<session_index>/<message_index>`.
    pub record_id: String,
    pub conversation_id: String,
    pub speaker: String,
    pub session_index: u32,
    pub message_index: u32,
    /// Session-level timestamp string, inherited verbatim.
    pub session_timestamp: String,
    /// Message-level timestamp; equals the session timestamp for datasets
    /// that only stamp sessions.
    pub message_timestamp: String,
    pub content: String,
}

impl MemoryRecord {
    pub fn make_id(conversation_id: &str, session_index: u32, message_index: u32) -> String {
        format!("{conversation_id}/{session_index}/{message_index}")
    }

    /// Metadata values keyword search may match against, alongside content.
    pub fn metadata_strings(&self) -> [String; 3] {
        [
            self.speaker.clone(),
            self.session_timestamp.clone(),
            self.message_timestamp.clone(),
        ]
    }
}

/// A retrieved record with up to two neighbors on each side, never crossing
/// a session boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryGroup {
    pub center: MemoryRecord,
    pub before: Vec<MemoryRecord>,
    pub after: Vec<MemoryRecord>,
}

impl MemoryGroup {
    /// Messages of the group in chronological order.
    pub fn in_order(&self) -> impl Iterator<Item = &MemoryRecord> {
        self.before
            .iter()
            .chain(std::iter::once(&self.center))
            .chain(self.after.iter())
    }
}

/// The memory bank for one or more conversations.
///
/// Iteration order is deterministic: by conversation id, then session, then
/// message index.
#[derive(Debug, Clone)]
pub struct MemoryBank {
    records: Vec<MemoryRecord>,
    embeddings: Vec<Option<Vec<f32>>>,
    dimension: usize,
    shard_count: usize,
    by_id: HashMap<String, usize>,
}

impl MemoryBank {
    /// Builds a bank from conversations, one record per message.
    ///
    /// `embeddings`, when supplied, maps record ids to vectors of the bank
    /// dimension; records without a vector are flagged unembedded and
    /// semantic search refuses them until embedded.
    pub fn build(
        conversations: &[Conversation],
        embeddings: Option<&HashMap<String, Vec<f32>>>,
        dimension: usize,
        shard_count: usize,
    ) -> Result<Self> {
        let mut ordered: Vec<&Conversation> = conversations.iter().collect();
        ordered.sort_by(|a, b| a.conversation_id.cmp(&b.conversation_id));

        let mut records = Vec::new();
        let mut vectors = Vec::new();
        let mut by_id = HashMap::new();
        for conv in ordered {
            for session in &conv.sessions {
                for msg in &session.messages {
                    let record_id =
                        MemoryRecord::make_id(&conv.conversation_id, session.session_index, msg.message_index);
                    if by_id.contains_key(&record_id) {
                        return Err(Error::Validation(format!(
                            "duplicate (conversation, session, message) triple: {record_id}"
                        )));
                    }
                    let embedding = match embeddings.and_then(|m| m.get(&record_id)) {
                        Some(v) => {
                            if v.len() != dimension {
                                return Err(Error::DimensionMismatch {
                                    expected: dimension,
                                    got: v.len(),
                                });
                            }
                            if !v.iter().all(|x| x.is_finite()) {
                                return Err(Error::Validation(format!(
                                    "non-finite embedding for {record_id}"
                                )));
                            }
                            Some(v.clone())
                        }
                        None => None,
                    };
                    by_id.insert(record_id.clone(), records.len());
                    records.push(MemoryRecord {
                        record_id,
                        conversation_id: conv.conversation_id.clone(),
                        speaker: msg.speaker.clone(),
                        session_index: session.session_index,
                        message_index: msg.message_index,
                        session_timestamp: session.timestamp.clone(),
                        message_timestamp: msg.timestamp.clone(),
                        content: msg.text.clone(),
                    });
                    vectors.push(embedding);
                }
            }
        }

        Ok(Self {
            records,
            embeddings: vectors,
            dimension,
            shard_count: shard_count.max(1),
            by_id,
        })
    }

    /// Reassembles a bank from persisted parts, revalidating invariants.
    pub(crate) fn from_parts(
        records: Vec<MemoryRecord>,
        embeddings: Vec<Option<Vec<f32>>>,
        dimension: usize,
        shard_count: usize,
    ) -> Result<Self> {
        debug_assert_eq!(records.len(), embeddings.len());
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.record_id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate record id {}", r.record_id)));
            }
            if let Some(v) = &embeddings[i] {
                if v.len() != dimension {
                    return Err(Error::DimensionMismatch { expected: dimension, got: v.len() });
                }
            }
        }
        Ok(Self { records, embeddings, dimension, shard_count: shard_count.max(1), by_id })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn shard_count(&self) -> usize {
        self.shard_count
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn record(&self, record_id: &str) -> Option<&MemoryRecord> {
        self.by_id.get(record_id).map(|&i| &self.records[i])
    }

    pub fn embedding(&self, record_id: &str) -> Option<&[f32]> {
        let &i = self.by_id.get(record_id)?;
        self.embeddings[i].as_deref()
    }

    pub fn embedding_at(&self, index: usize) -> Option<&[f32]> {
        self.embeddings.get(index).and_then(|e| e.as_deref())
    }

    /// Number of records that carry an embedding.
    pub fn embedded_count(&self) -> usize {
        self.embeddings.iter().filter(|e| e.is_some()).count()
    }

    pub fn fully_embedded(&self) -> bool {
        self.embedded_count() == self.len()
    }

    /// Record ids still lacking an embedding, in corpus order.
    pub fn unembedded_ids(&self) -> Vec<String> {
        self.records
            .iter()
            .zip(&self.embeddings)
            .filter(|(_, e)| e.is_none())
            .map(|(r, _)| r.record_id.clone())
            .collect()
    }

    /// Installs embeddings for the given records.
    pub fn set_embeddings(&mut self, vectors: &HashMap<String, Vec<f32>>) -> Result<()> {
        for (id, v) in vectors {
            let &i = self
                .by_id
                .get(id)
                .ok_or_else(|| Error::NotFound(format!("record {id}")))?;
            if v.len() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    got: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Validation(format!("non-finite embedding for {id}")));
            }
            self.embeddings[i] = Some(v.clone());
        }
        Ok(())
    }

    /// Shard assignment for a record id: FNV-1a hash modulo shard count.
    pub fn shard_of(&self, record_id: &str) -> usize {
        (fnv1a64(record_id.as_bytes()) % self.shard_count as u64) as usize
    }

    /// Conversation ids present in the bank, deduplicated, in order.
    pub fn conversation_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if out.last().map(String::as_str) != Some(r.conversation_id.as_str()) {
                out.push(r.conversation_id.clone());
            }
        }
        out.dedup();
        out
    }

    /// The retrieved record plus up to `radius` neighbors on each side from
    /// the same conversation and session. Groups truncate at session
    /// boundaries rather than crossing them.
    pub fn context_group(&self, record_id: &str, radius: usize) -> Result<MemoryGroup> {
        let &idx = self
            .by_id
            .get(record_id)
            .ok_or_else(|| Error::NotFound(format!("record {record_id}")))?;
        let center = self.records[idx].clone();
        let same_session = |r: &MemoryRecord| {
            r.conversation_id == center.conversation_id && r.session_index == center.session_index
        };
        let before: Vec<MemoryRecord> = (1..=radius)
            .filter_map(|d| idx.checked_sub(d))
            .map(|i| self.records[i].clone())
            .take_while(|r| same_session(r))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let after: Vec<MemoryRecord> = (1..=radius)
            .filter_map(|d| idx.checked_add(d))
            .filter(|&i| i < self.records.len())
            .map(|i| self.records[i].clone())
            .take_while(same_session)
            .collect();
        Ok(MemoryGroup { center, before, after })
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Message, Session};

    fn conv(id: &str, sessions: &[usize]) -> Conversation {
        let speakers = ["A".to_string(), "B".to_string()];
        Conversation {
            conversation_id: id.into(),
            speakers: speakers.clone(),
            sessions: sessions
                .iter()
                .enumerate()
                .map(|(s, &n)| Session {
                    session_index: s as u32 + 1,
                    timestamp: format!("ts-{}", s + 1),
                    messages: (1..=n as u32)
                        .map(|m| Message {
                            speaker: speakers[(m as usize + 1) % 2].clone(),
                            text: format!("{id} s{} m{m}", s + 1),
                            message_index: m,
                            timestamp: format!("ts-{}", s + 1),
                        })
                        .collect(),
                })
                .collect(),
        }
    }

    #[test]
    fn one_record_per_message() {
        let bank = MemoryBank::build(&[conv("c1", &[3, 2]), conv("c2", &[4])], None, 8, 4).unwrap();
        assert_eq!(bank.len(), 9);
        assert_eq!(bank.embedded_count(), 0);
        // Deterministic order: conversation, session, message.
        let ids: Vec<&str> = bank.records().iter().map(|r| r.record_id.as_str()).collect();
        assert_eq!(ids[0], "c1/1/1");
        assert_eq!(ids[4], "c1/2/2");
        assert_eq!(ids[5], "c2/1/1");
    }

    #[test]
    fn empty_input_gives_empty_bank() {
        let bank = MemoryBank::build(&[], None, 8, 4).unwrap();
        assert!(bank.is_empty());
    }

    #[test]
    fn duplicate_indices_are_rejected() {
        let mut c = conv("c1", &[2]);
        c.sessions[0].messages[1].message_index = 1;
        let err = MemoryBank::build(&[c], None, 8, 4).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut embeddings = HashMap::new();
        embeddings.insert("c1/1/1".to_string(), vec![0.0_f32; 7]);
        let err = MemoryBank::build(&[conv("c1", &[1])], Some(&embeddings), 8, 4).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 8, got: 7 }));
    }

    #[test]
    fn context_group_in_the_middle_takes_two_each_side() {
        let bank = MemoryBank::build(&[conv("c1", &[7])], None, 8, 4).unwrap();
        let g = bank.context_group("c1/1/4", 2).unwrap();
        assert_eq!(g.before.len(), 2);
        assert_eq!(g.after.len(), 2);
        let order: Vec<u32> = g.in_order().map(|r| r.message_index).collect();
        assert_eq!(order, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn context_group_truncates_at_session_start() {
        let bank = MemoryBank::build(&[conv("c1", &[3, 3])], None, 8, 4).unwrap();
        let g = bank.context_group("c1/2/1", 2).unwrap();
        assert!(g.before.is_empty());
        assert_eq!(g.after.len(), 2);
        assert!(g.in_order().all(|r| r.session_index == 2));
    }

    #[test]
    fn context_group_single_message_session_is_center_only() {
        let bank = MemoryBank::build(&[conv("c1", &[1])], None, 8, 4).unwrap();
        let g = bank.context_group("c1/1/1", 2).unwrap();
        assert!(g.before.is_empty());
        assert!(g.after.is_empty());
    }

    #[test]
    fn context_group_unknown_record_is_not_found() {
        let bank = MemoryBank::build(&[conv("c1", &[1])], None, 8, 4).unwrap();
        assert!(matches!(bank.context_group("nope", 2), Err(Error::NotFound(_))));
    }

    #[test]
    fn record_count_equals_sum_of_message_counts() {
        let convs = [conv("c1", &[3, 5, 2]), conv("c2", &[1, 1])];
        let total: usize = convs.iter().map(Conversation::message_count).sum();
        let bank = MemoryBank::build(&convs, None, 8, 4).unwrap();
        assert_eq!(bank.len(), total);
    }

    #[test]
    fn shard_assignment_is_stable_and_in_range() {
        let bank = MemoryBank::build(&[conv("c1", &[10])], None, 8, 4).unwrap();
        for r in bank.records() {
            let s = bank.shard_of(&r.record_id);
            assert!(s < 4);
            assert_eq!(s, bank.shard_of(&r.record_id));
        }
    }
}
