//! Conversational QA corpus: normalized conversations, sessions, messages,
//! and QA items with category mapping and a seeded train/validation split.
//!
//! The loader targets the released LoCoMo JSON layout (see [`locomo`] for the
//! exact field mapping). Everything downstream works on the normalized model
//! defined here.

mod fixture;
mod locomo;
mod normalized;
mod split;

pub use fixture::{fixture_dataset_json, write_fixture_dataset, FixtureSpec};
pub use locomo::{load_locomo_file, load_locomo_value};
pub use normalized::{read_normalized, write_normalized, NORMALIZED_SCHEMA_VERSION};
pub use split::split_dataset;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Question category labels.
///
/// Labels derive from the numeric category code via the released source-code
/// mapping (`1..=5` -> multi-hop, temporal, open-domain, single-hop,
/// adversarial), not the sequentially described one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CategoryLabel {
    MultiHop,
    Temporal,
    OpenDomain,
    SingleHop,
    Adversarial,
}

impl CategoryLabel {
    /// The four categories that participate in evaluation, in report order.
    pub const EVAL_ORDER: [CategoryLabel; 4] = [
        CategoryLabel::SingleHop,
        CategoryLabel::MultiHop,
        CategoryLabel::OpenDomain,
        CategoryLabel::Temporal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CategoryLabel::MultiHop => "multi-hop",
            CategoryLabel::Temporal => "temporal",
            CategoryLabel::OpenDomain => "open-domain",
            CategoryLabel::SingleHop => "single-hop",
            CategoryLabel::Adversarial => "adversarial",
        }
    }
}

/// Maps a numeric category code to its label.
///
/// Codes outside `1..=5` are a validation error.
pub fn map_category(code: u8) -> Result<CategoryLabel> {
    match code {
        1 => Ok(CategoryLabel::MultiHop),
        2 => Ok(CategoryLabel::Temporal),
        3 => Ok(CategoryLabel::OpenDomain),
        4 => Ok(CategoryLabel::SingleHop),
        5 => Ok(CategoryLabel::Adversarial),
        other => Err(Error::Validation(format!(
            "unknown category code {other}, expected 1..=5"
        ))),
    }
}

/// One message of a session. `timestamp` is inherited from the session when
/// the dataset carries no message-level timestamp (LoCoMo does not).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: String,
    pub text: String,
    /// 1-based, consecutive within the session.
    pub message_index: u32,
    pub timestamp: String,
}

/// One conversation session with its dataset-supplied timestamp string.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    /// 1-based session number.
    pub session_index: u32,
    /// Calendar date-time string exactly as given by the dataset,
    /// e.g. `"1:56 pm on 8 May, 2023"`.
    pub timestamp: String,
    pub messages: Vec<Message>,
}

/// A two-speaker multi-session conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub conversation_id: String,
    /// Exactly two speaker names.
    pub speakers: [String; 2],
    /// Sessions in chronological order.
    pub sessions: Vec<Session>,
}

impl Conversation {
    pub fn message_count(&self) -> usize {
        self.sessions.iter().map(|s| s.messages.len()).sum()
    }

    /// Validates the structural invariants: speakers belong to the pair and
    /// message indices are consecutive from 1 within each session.
    pub fn validate(&self) -> Result<()> {
        for session in &self.sessions {
            for (pos, msg) in session.messages.iter().enumerate() {
                if msg.message_index != pos as u32 + 1 {
                    return Err(Error::Validation(format!(
                        "conversation {} session {}: message index {} at position {}",
                        self.conversation_id,
                        session.session_index,
                        msg.message_index,
                        pos + 1
                    )));
                }
                if msg.speaker != self.speakers[0] && msg.speaker != self.speakers[1] {
                    return Err(Error::Validation(format!(
                        "conversation {} session {}: speaker {:?} is not one of {:?}",
                        self.conversation_id, session.session_index, msg.speaker, self.speakers
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A question over one conversation, with gold answer and category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAItem {
    /// Stable id: `<conversation_id>/q/<ordinal>`.
    pub question_id: String,
    pub conversation_id: String,
    pub question: String,
    pub gold_answer: String,
    pub category_code: u8,
    pub category_label: CategoryLabel,
    /// Adversarial items carry no usable gold label and never enter
    /// evaluation aggregates.
    pub excluded_from_eval: bool,
    /// `(session_index, message_index)` pairs when the dataset names them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evidence_refs: Option<Vec<(u32, u32)>>,
}

/// One conversation plus its QA items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub conversation: Conversation,
    pub qa: Vec<QAItem>,
}

/// The loaded dataset: all conversations with their QA items.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub entries: Vec<DatasetEntry>,
}

impl Dataset {
    pub fn conversation_ids(&self) -> Vec<String> {
        self.entries
            .iter()
            .map(|e| e.conversation.conversation_id.clone())
            .collect()
    }

    pub fn entry(&self, conversation_id: &str) -> Option<&DatasetEntry> {
        self.entries
            .iter()
            .find(|e| e.conversation.conversation_id == conversation_id)
    }

    pub fn total_qa(&self) -> usize {
        self.entries.iter().map(|e| e.qa.len()).sum()
    }

    /// Every QA item must reference a conversation present in the dataset and
    /// every conversation must satisfy its own invariants.
    pub fn validate(&self) -> Result<()> {
        for entry in &self.entries {
            entry.conversation.validate()?;
            for qa in &entry.qa {
                if qa.conversation_id != entry.conversation.conversation_id {
                    return Err(Error::Validation(format!(
                        "QA item {} attached to conversation {}",
                        qa.question_id, entry.conversation.conversation_id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn stats(&self) -> DatasetStats {
        let per_conversation = self
            .entries
            .iter()
            .map(|e| {
                let adversarial = e
                    .qa
                    .iter()
                    .filter(|q| q.category_label == CategoryLabel::Adversarial)
                    .count();
                ConversationStats {
                    conversation_id: e.conversation.conversation_id.clone(),
                    sessions: e.conversation.sessions.len(),
                    messages: e.conversation.message_count(),
                    questions_total: e.qa.len(),
                    questions_scored: e.qa.len() - adversarial,
                    estimated_tokens: estimate_tokens(&e.conversation),
                }
            })
            .collect();
        DatasetStats { per_conversation }
    }
}

/// Per-conversation summary counts. `questions_total` includes adversarial
/// items, `questions_scored` excludes them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConversationStats {
    pub conversation_id: String,
    pub sessions: usize,
    pub messages: usize,
    pub questions_total: usize,
    pub questions_scored: usize,
    pub estimated_tokens: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetStats {
    pub per_conversation: Vec<ConversationStats>,
}

/// Rough token count for reporting only: word count x 1.3. Never gates
/// behavior.
pub fn estimate_tokens(conversation: &Conversation) -> usize {
    let words: usize = conversation
        .sessions
        .iter()
        .flat_map(|s| &s.messages)
        .map(|m| m.text.split_whitespace().count())
        .sum();
    (words as f64 * 1.3).round() as usize
}

/// Train/validation partition of conversation ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_conversations: Vec<String>,
    pub validation_conversations: Vec<String>,
    pub shuffle_seed: u64,
}
