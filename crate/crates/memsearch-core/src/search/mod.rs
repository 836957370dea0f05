//! The two memory search modes: semantic top-k by cosine similarity and
//! all-keywords filtering, both with speaker/session filters and context
//! group expansion.
//!
//! Search is an exhaustive scan over the immutable bank. Banks here are a
//! few hundred records per conversation, so exactness beats index
//! complexity; ties break by ascending record id for determinism.

mod format;

pub use format::format_tool_response;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{MemoryBank, MemoryGroup, MemoryRecord};

/// Default cap on keyword results per call, to bound context growth.
pub const DEFAULT_KEYWORD_CAP: usize = 20;

/// Context radius around a retrieved record (two before, two after).
pub const DEFAULT_GROUP_RADIUS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Semantic,
    Keyword,
}

impl SearchMode {
    /// Name used in tool-response headers.
    pub fn tool_name(&self) -> &'static str {
        match self {
            SearchMode::Semantic => "semantic_search",
            SearchMode::Keyword => "keyword_search",
        }
    }
}

/// Speaker/session restrictions applied to candidate records (the group
/// center; neighbors are context and may be anyone's messages).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchFilters {
    /// Case-insensitive speaker name match.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<u32>,
}

impl SearchFilters {
    pub fn is_empty(&self) -> bool {
        self.speaker.is_none() && self.session.is_none()
    }

    pub fn matches(&self, record: &MemoryRecord) -> bool {
        if let Some(speaker) = &self.speaker {
            if !record.speaker.eq_ignore_ascii_case(speaker) {
                return false;
            }
        }
        if let Some(session) = self.session {
            if record.session_index != session {
                return false;
            }
        }
        true
    }

    /// Echo string for tool-response headers, e.g. `speaker: Nate, session: 3`.
    pub fn echo(&self) -> String {
        let mut parts = Vec::new();
        if let Some(s) = &self.speaker {
            parts.push(format!("speaker: {s}"));
        }
        if let Some(k) = self.session {
            parts.push(format!("session: {k}"));
        }
        parts.join(", ")
    }
}

/// One retrieved group with its score. Semantic scores are cosine
/// similarities; keyword matches carry 1.0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoredGroup {
    pub group: MemoryGroup,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub groups: Vec<ScoredGroup>,
    pub mode_used: SearchMode,
    pub filters_echoed: String,
}

/// Top-k records by cosine similarity among records passing the filters,
/// each expanded to its context group.
///
/// Every candidate must carry an embedding; an unembedded bank is refused.
/// Fewer than `top_k` groups come back only when fewer candidates exist.
pub fn semantic_search(
    bank: &MemoryBank,
    query_embedding: &[f32],
    top_k: usize,
    filters: &SearchFilters,
    group_radius: usize,
) -> Result<SearchResult> {
    if top_k == 0 {
        return Err(Error::Validation("top_k must be at least 1".into()));
    }
    if query_embedding.len() != bank.dimension() {
        return Err(Error::DimensionMismatch {
            expected: bank.dimension(),
            got: query_embedding.len(),
        });
    }

    let mut scored: Vec<(f64, &MemoryRecord)> = Vec::new();
    for (i, record) in bank.records().iter().enumerate() {
        if !filters.matches(record) {
            continue;
        }
        let embedding = bank.embedding_at(i).ok_or_else(|| {
            Error::Validation(format!(
                "semantic search refused: record {} has no embedding; embed the bank first",
                record.record_id
            ))
        })?;
        scored.push((cosine_similarity(query_embedding, embedding), record));
    }

    scored.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| a.1.record_id.cmp(&b.1.record_id))
    });
    scored.truncate(top_k);

    let groups = scored
        .into_iter()
        .map(|(score, record)| {
            Ok(ScoredGroup {
                group: bank.context_group(&record.record_id, group_radius)?,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(SearchResult {
        groups,
        mode_used: SearchMode::Semantic,
        filters_echoed: filters.echo(),
    })
}

/// Records where every keyword appears (case-insensitive substring) in the
/// content or any metadata field, passing the filters, in corpus order,
/// truncated to `cap`.
pub fn keyword_search(
    bank: &MemoryBank,
    keywords: &[String],
    filters: &SearchFilters,
    cap: usize,
    group_radius: usize,
) -> Result<SearchResult> {
    if keywords.is_empty() {
        return Err(Error::Validation("keyword search requires at least one keyword".into()));
    }
    let needles: Vec<String> = keywords.iter().map(|k| k.to_lowercase()).collect();

    let mut groups = Vec::new();
    for record in bank.records() {
        if !filters.matches(record) {
            continue;
        }
        if record_matches_all(record, &needles) {
            groups.push(ScoredGroup {
                group: bank.context_group(&record.record_id, group_radius)?,
                score: 1.0,
            });
            if groups.len() == cap {
                break;
            }
        }
    }

    Ok(SearchResult {
        groups,
        mode_used: SearchMode::Keyword,
        filters_echoed: filters.echo(),
    })
}

fn record_matches_all(record: &MemoryRecord, needles: &[String]) -> bool {
    let content = record.content.to_lowercase();
    let metadata: Vec<String> = record
        .metadata_strings()
        .iter()
        .map(|s| s.to_lowercase())
        .collect();
    needles
        .iter()
        .all(|n| content.contains(n) || metadata.iter().any(|m| m.contains(n)))
}

/// Cosine similarity with query-time normalization; 0 when either vector
/// has zero norm.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0_f64;
    let mut na = 0.0_f64;
    let mut nb = 0.0_f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += f64::from(x) * f64::from(y);
        na += f64::from(x) * f64::from(x);
        nb += f64::from(y) * f64::from(y);
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Conversation, Message, Session};
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn bank_with(texts: &[(&str, &str)], embeddings: Option<Vec<Vec<f32>>>, dim: usize) -> MemoryBank {
        let conv = Conversation {
            conversation_id: "c".into(),
            speakers: ["A".into(), "B".into()],
            sessions: vec![Session {
                session_index: 1,
                timestamp: "noon".into(),
                messages: texts
                    .iter()
                    .enumerate()
                    .map(|(i, (speaker, text))| Message {
                        speaker: (*speaker).into(),
                        text: (*text).into(),
                        message_index: i as u32 + 1,
                        timestamp: "noon".into(),
                    })
                    .collect(),
            }],
        };
        let map = embeddings.map(|vs| {
            vs.into_iter()
                .enumerate()
                .map(|(i, v)| (format!("c/1/{}", i + 1), v))
                .collect::<HashMap<_, _>>()
        });
        MemoryBank::build(&[conv], map.as_ref(), dim, 4).unwrap()
    }

    #[test]
    fn query_equal_to_a_record_ranks_it_first_with_score_one() {
        let bank = bank_with(
            &[("A", "one"), ("B", "two"), ("A", "three")],
            Some(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.7, 0.7]]),
            2,
        );
        let r = semantic_search(&bank, &[0.0, 1.0], 3, &SearchFilters::default(), 0).unwrap();
        assert_eq!(r.groups[0].group.center.record_id, "c/1/2");
        assert!((r.groups[0].score - 1.0).abs() < 1e-9);
        // Scores are non-increasing.
        for w in r.groups.windows(2) {
            assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn top_k_larger_than_candidates_returns_everything_ranked() {
        let bank = bank_with(
            &[("A", "one"), ("B", "two")],
            Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            2,
        );
        let r = semantic_search(&bank, &[1.0, 0.2], 10, &SearchFilters::default(), 0).unwrap();
        assert_eq!(r.groups.len(), 2);
    }

    #[test]
    fn unembedded_bank_refuses_semantic_search() {
        let bank = bank_with(&[("A", "one")], None, 2);
        let err = semantic_search(&bank, &[1.0, 0.0], 1, &SearchFilters::default(), 0).unwrap_err();
        assert!(err.to_string().contains("no embedding"), "{err}");
    }

    #[test]
    fn keyword_search_requires_all_keywords() {
        let bank = bank_with(
            &[("A", "I walked the dog today"), ("B", "the dog barked"), ("A", "long walk home")],
            None,
            2,
        );
        let hits = |kw: &[&str]| {
            keyword_search(
                &bank,
                &kw.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
                &SearchFilters::default(),
                20,
                0,
            )
            .unwrap()
            .groups
            .iter()
            .map(|g| g.group.center.record_id.clone())
            .collect::<Vec<_>>()
        };
        assert_eq!(hits(&["dog", "walk"]), vec!["c/1/1"]);
        assert_eq!(hits(&["zzzqqq"]), Vec::<String>::new());
    }

    #[test]
    fn keyword_search_matches_metadata_fields() {
        let bank = bank_with(&[("Nate", "won my second tournament")], None, 2);
        let r = keyword_search(
            &bank,
            &["nate".to_string()],
            &SearchFilters::default(),
            20,
            0,
        )
        .unwrap();
        assert_eq!(r.groups.len(), 1);
    }

    #[test]
    fn speaker_filter_is_case_insensitive_and_applies_to_centers() {
        let bank = bank_with(
            &[("A", "tournament stories"), ("B", "tournament recap")],
            None,
            2,
        );
        let filters = SearchFilters { speaker: Some("a".into()), session: None };
        let r = keyword_search(&bank, &["tournament".into()], &filters, 20, 0).unwrap();
        assert_eq!(r.groups.len(), 1);
        assert_eq!(r.groups[0].group.center.speaker, "A");
        assert_eq!(r.filters_echoed, "speaker: a");
    }

    #[test]
    fn keyword_cap_truncates_in_corpus_order() {
        let texts: Vec<(&str, &str)> = (0..10).map(|_| ("A", "apple pie")).collect();
        let bank = bank_with(&texts, None, 2);
        let r = keyword_search(&bank, &["apple".into()], &SearchFilters::default(), 3, 0).unwrap();
        assert_eq!(r.groups.len(), 3);
        assert_eq!(r.groups[0].group.center.record_id, "c/1/1");
    }

    proptest! {
        // Multi-keyword search equals the intersection of single-keyword
        // searches, as record sets.
        #[test]
        fn multi_keyword_equals_intersection(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let vocab = ["dog", "walk", "tea", "rain", "chess"];
            let texts: Vec<String> = (0..30)
                .map(|_| {
                    let n = rng.gen_range(1..4);
                    (0..n).map(|_| vocab[rng.gen_range(0..vocab.len())]).collect::<Vec<_>>().join(" ")
                })
                .collect();
            let pairs: Vec<(&str, &str)> =
                texts.iter().map(|t| ("A", t.as_str())).collect();
            let bank = bank_with(&pairs, None, 2);
            let a = "dog".to_string();
            let b = "walk".to_string();
            let ids = |kws: &[String]| {
                keyword_search(&bank, kws, &SearchFilters::default(), usize::MAX, 0)
                    .unwrap()
                    .groups
                    .iter()
                    .map(|g| g.group.center.record_id.clone())
                    .collect::<std::collections::BTreeSet<_>>()
            };
            let both = ids(&[a.clone(), b.clone()]);
            let inter: std::collections::BTreeSet<String> =
                ids(&[a]).intersection(&ids(&[b])).cloned().collect();
            prop_assert_eq!(both, inter);
        }

        // Scaling the query by a positive constant leaves the ranking
        // unchanged.
        #[test]
        fn semantic_ranking_is_scale_invariant(scale in 0.001f32..100.0) {
            let bank = bank_with(
                &[("A", "one"), ("B", "two"), ("A", "three"), ("B", "four")],
                Some(vec![
                    vec![0.9, 0.1], vec![0.2, 0.8], vec![0.5, 0.5], vec![-0.3, 0.4],
                ]),
                2,
            );
            let q = [0.6_f32, 0.3];
            let scaled = [q[0] * scale, q[1] * scale];
            let ids = |query: &[f32]| {
                semantic_search(&bank, query, 4, &SearchFilters::default(), 0)
                    .unwrap()
                    .groups
                    .iter()
                    .map(|g| g.group.center.record_id.clone())
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(ids(&q), ids(&scaled));
        }

        // Filtering then searching equals searching then filtering.
        #[test]
        fn filters_commute_with_search(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let texts: Vec<(&str, String)> = (0..20)
                .map(|i| {
                    let sp = if i % 2 == 0 { "A" } else { "B" };
                    (sp, format!("note {} tournament", rng.gen_range(0..5)))
                })
                .collect();
            let pairs: Vec<(&str, &str)> = texts.iter().map(|(s, t)| (*s, t.as_str())).collect();
            let bank = bank_with(&pairs, None, 2);
            let filters = SearchFilters { speaker: Some("A".into()), session: None };
            let filtered_then = keyword_search(&bank, &["tournament".into()], &filters, usize::MAX, 0)
                .unwrap()
                .groups
                .iter()
                .map(|g| g.group.center.record_id.clone())
                .collect::<Vec<_>>();
            let then_filtered = keyword_search(
                &bank,
                &["tournament".into()],
                &SearchFilters::default(),
                usize::MAX,
                0,
            )
            .unwrap()
            .groups
            .into_iter()
            .filter(|g| g.group.center.speaker == "A")
            .map(|g| g.group.center.record_id)
            .collect::<Vec<_>>();
            prop_assert_eq!(filtered_then, then_filtered);
        }
    }
}
