//! Loader for the released LoCoMo JSON layout.
//!
//! The file is a JSON array of samples. Field mapping:
//!
//! | LoCoMo field                              | normalized model                  |
//! |-------------------------------------------|-----------------------------------|
//! | `sample_id`                               | `Conversation::conversation_id`   |
//! | `conversation.speaker_a` / `speaker_b`    | `Conversation::speakers`          |
//! | `conversation.session_<k>`                | `Session` with `session_index = k`|
//! | `conversation.session_<k>_date_time`      | `Session::timestamp`              |
//! | session entry `speaker` / `text`          | `Message` (index = 1-based pos)   |
//! | `qa[i].question` / `answer` / `category`  | `QAItem`                          |
//! | `qa[i].adversarial_answer`                | gold answer for category-5 items  |
//! | `qa[i].evidence` (`"D<sess>:<msg>"`)      | `QAItem::evidence_refs`           |
//!
//! Messages carry no timestamp of their own in LoCoMo; each inherits its
//! session timestamp verbatim.

use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

use super::{map_category, Conversation, Dataset, DatasetEntry, Message, QAItem, Session};

/// Parses a LoCoMo-layout JSON file into the normalized dataset model.
pub fn load_locomo_file(path: &Path) -> Result<Dataset> {
    let bytes = std::fs::read(path).map_err(|e| {
        Error::Parse {
            context: path.display().to_string(),
            message: e.to_string(),
        }
    })?;
    let root: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    load_locomo_value(&root)
}

/// Parses an already-decoded LoCoMo JSON document.
pub fn load_locomo_value(root: &Value) -> Result<Dataset> {
    let samples = root.as_array().ok_or_else(|| Error::Parse {
        context: "<root>".into(),
        message: "expected a JSON array of samples".into(),
    })?;

    let mut entries = Vec::with_capacity(samples.len());
    for (i, sample) in samples.iter().enumerate() {
        let fallback_id = format!("sample-{i}");
        let sample_id = sample
            .get("sample_id")
            .and_then(Value::as_str)
            .unwrap_or(&fallback_id)
            .to_string();
        let conversation = parse_conversation(&sample_id, sample)?;
        let qa = parse_qa(&sample_id, sample)?;
        entries.push(DatasetEntry { conversation, qa });
    }

    let dataset = Dataset { entries };
    dataset.validate()?;
    Ok(dataset)
}

fn parse_conversation(sample_id: &str, sample: &Value) -> Result<Conversation> {
    let conv = sample
        .get("conversation")
        .and_then(Value::as_object)
        .ok_or_else(|| parse_err(sample_id, "missing `conversation` object"))?;

    let speaker_a = conv
        .get("speaker_a")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(sample_id, "missing `conversation.speaker_a`"))?;
    let speaker_b = conv
        .get("speaker_b")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(sample_id, "missing `conversation.speaker_b`"))?;

    // Sessions are keyed `session_<k>`; collect every k present and keep
    // numeric order.
    let mut indices: Vec<u32> = conv
        .keys()
        .filter_map(|k| {
            k.strip_prefix("session_")
                .filter(|rest| !rest.ends_with("_date_time"))
                .and_then(|rest| rest.parse::<u32>().ok())
        })
        .collect();
    indices.sort_unstable();
    indices.dedup();

    let mut sessions = Vec::with_capacity(indices.len());
    for k in indices {
        let raw = conv
            .get(&format!("session_{k}"))
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(sample_id, &format!("`session_{k}` is not an array")))?;
        let timestamp = conv
            .get(&format!("session_{k}_date_time"))
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(sample_id, &format!("missing `session_{k}_date_time`")))?
            .to_string();
        let mut messages = Vec::with_capacity(raw.len());
        for (pos, item) in raw.iter().enumerate() {
            let speaker = item
                .get("speaker")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    parse_err(
                        sample_id,
                        &format!("session_{k} message {}: missing `speaker`", pos + 1),
                    )
                })?
                .to_string();
            let text = item
                .get("text")
                .and_then(Value::as_str)
                .ok_or_else(|| {
                    parse_err(
                        sample_id,
                        &format!("session_{k} message {}: missing `text`", pos + 1),
                    )
                })?
                .to_string();
            messages.push(Message {
                speaker,
                text,
                message_index: pos as u32 + 1,
                timestamp: timestamp.clone(),
            });
        }
        sessions.push(Session {
            session_index: k,
            timestamp,
            messages,
        });
    }

    Ok(Conversation {
        conversation_id: sample_id.to_string(),
        speakers: [speaker_a.to_string(), speaker_b.to_string()],
        sessions,
    })
}

fn parse_qa(sample_id: &str, sample: &Value) -> Result<Vec<QAItem>> {
    let raw = match sample.get("qa") {
        Some(v) => v
            .as_array()
            .ok_or_else(|| parse_err(sample_id, "`qa` is not an array"))?,
        None => return Ok(Vec::new()),
    };

    let mut items = Vec::with_capacity(raw.len());
    for (i, q) in raw.iter().enumerate() {
        let question = q
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err(sample_id, &format!("qa[{i}]: missing `question`")))?
            .to_string();
        let code = q
            .get("category")
            .and_then(Value::as_u64)
            .ok_or_else(|| parse_err(sample_id, &format!("qa[{i}]: missing `category`")))?;
        let code =
            u8::try_from(code).map_err(|_| parse_err(sample_id, &format!("qa[{i}]: category")))?;
        let label = map_category(code).map_err(|e| {
            Error::Validation(format!("{sample_id} qa[{i}] ({question:?}): {e}"))
        })?;
        // Adversarial items carry `adversarial_answer`; everything else `answer`.
        // Numeric answers show up in the wild, so accept any scalar.
        let gold = q
            .get("answer")
            .or_else(|| q.get("adversarial_answer"))
            .map(scalar_to_string)
            .unwrap_or_default();
        let evidence = q.get("evidence").and_then(Value::as_array).map(|ev| {
            ev.iter()
                .filter_map(|e| e.as_str().and_then(parse_evidence_ref))
                .collect::<Vec<_>>()
        });
        items.push(QAItem {
            question_id: format!("{sample_id}/q/{i}"),
            conversation_id: sample_id.to_string(),
            question,
            gold_answer: gold,
            category_code: code,
            category_label: label,
            excluded_from_eval: label == super::CategoryLabel::Adversarial,
            evidence_refs: evidence.filter(|v| !v.is_empty()),
        });
    }
    Ok(items)
}

/// Evidence strings look like `"D3:12"` (session 3, message 12).
fn parse_evidence_ref(s: &str) -> Option<(u32, u32)> {
    let rest = s.strip_prefix('D')?;
    let (sess, msg) = rest.split_once(':')?;
    Some((sess.parse().ok()?, msg.parse().ok()?))
}

fn scalar_to_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn parse_err(sample_id: &str, message: &str) -> Error {
    Error::Parse {
        context: sample_id.to_string(),
        message: message.to_string(),
    }
}
