//! Initial prompt assembly: the fixed system prompt plus the task prompt
//! with database statistics, the target question, and seed context memories
//! per speaker. Both texts are stable wire formats pinned by golden tests.

use std::collections::BTreeMap;

use crate::backends::{ChatMessage, EmbeddingBackend};
use crate::corpus::QAItem;
use crate::error::{Error, Result};
use crate::memory::{MemoryBank, MemoryRecord};
use crate::rlvr::normalize_tokens;
use crate::search::{semantic_search, SearchFilters};

use super::EpisodeConfig;

/// System prompt for the search agent.
pub const SYSTEM_PROMPT: &str = "You are an expert at searching memory databases for \
    question-answering. Your goal is to search through an existing memory database to find \
    relevant information and provide an answer to a target question. Available tools are \
    described below.";

/// Builds the initial dialogue: system prompt plus the task prompt with all
/// slots filled.
///
/// Seed context is the top `seed_context_k` semantic hits per speaker with
/// the question as query; when semantic search is ablated the fallback ranks
/// records by how many question terms they contain.
pub async fn build_initial_prompt(
    bank: &MemoryBank,
    qa: &QAItem,
    embedder: &dyn EmbeddingBackend,
    config: &EpisodeConfig,
) -> Result<Vec<ChatMessage>> {
    let speakers = bank_speakers(bank);
    if speakers.len() != 2 {
        return Err(Error::Validation(format!(
            "bank holds {} speakers, expected a two-speaker conversation",
            speakers.len()
        )));
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in bank.records() {
        *counts.entry(r.speaker.as_str()).or_default() += 1;
    }
    let breakdown = speakers
        .iter()
        .map(|s| format!("{} from {}", counts.get(s.as_str()).copied().unwrap_or(0), s))
        .collect::<Vec<_>>()
        .join(", ");
    let num_sessions = {
        let mut sessions: Vec<(String, u32)> = bank
            .records()
            .iter()
            .map(|r| (r.conversation_id.clone(), r.session_index))
            .collect();
        sessions.sort();
        sessions.dedup();
        sessions.len()
    };

    let seeds_a = seed_context(bank, qa, &speakers[0], embedder, config).await?;
    let seeds_b = seed_context(bank, qa, &speakers[1], embedder, config).await?;

    let mut prompt = String::new();
    prompt.push_str(&format!(
        "You have access to the following memory database: {} total memories ({}) across {} \
         sessions between {} and {}. The database contains {}. Each memory includes speaker, \
         session, timestamp, and source metadata.\n\n",
        bank.len(),
        breakdown,
        num_sessions,
        speakers[0],
        speakers[1],
        config.level_descriptor,
    ));
    prompt.push_str(&format!("Target Question: {}\n\n", qa.question));
    prompt.push_str(
        "Your task is to search through the memory database to find relevant information that \
         helps answer the above question, then submit your final answer.\n\n\
         Instructions:\n\
         1. Use the search_memory tool to find relevant memories that could help answer the question\n\
         2. You may search multiple times with different queries and search types to gather comprehensive information\n\
         3. Once you have found sufficient information, use the submit_answer tool to provide your final answer\n\n\
         IMPORTANT: The question may require:\n\
         - Information from a single session\n\
         - Synthesizing information from multiple sessions\n\
         - Temporal reasoning across conversations\n\
         - Integrating speaker information with general knowledge\n\n\
         INSTRUCTIONS for answering the question:\n\
         1. Carefully analyze all provided memories\n\
         2. Pay special attention to any timestamps or temporal information\n\
         3. If the question asks about a specific event or fact, look for direct evidence in the memories\n\
         4. If the memories contain contradictory information, prioritize the most recent information\n\
         5. If there is a question about time references (like \"last year\", \"two months ago\", etc.), calculate the actual date based on context\n\
         6. Always convert relative time references to specific dates, months, or years when possible\n\
         7. Focus only on the content of the memories provided\n\
         8. The answer should be concise and direct, less than 5-6 words when possible\n\n",
    );
    prompt.push_str(&format!(
        "You have up to {} turns to search for information and submit your answer. Focus on \
         finding the most relevant memories to answer the question accurately.\n\n",
        config.max_turns,
    ));
    prompt.push_str(
        "Here is some relevant context from the conversation database that may help answer the \
         question:\n\n",
    );
    prompt.push_str(&render_speaker_section(1, &seeds_a));
    prompt.push('\n');
    prompt.push_str(&render_speaker_section(2, &seeds_b));
    prompt.push('\n');
    prompt.push_str(
        "Now, please search for more specific information and submit your final answer using \
         the submit_answer tool.",
    );

    Ok(vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(prompt)])
}

/// Speakers in order of first appearance in the bank.
fn bank_speakers(bank: &MemoryBank) -> Vec<String> {
    let mut speakers: Vec<String> = Vec::new();
    for r in bank.records() {
        if !speakers.contains(&r.speaker) {
            speakers.push(r.speaker.clone());
        }
    }
    speakers
}

fn render_speaker_section(ordinal: usize, seeds: &[MemoryRecord]) -> String {
    let mut out = format!("======\nConversation Memories - Speaker {ordinal}\n======\n");
    for (i, record) in seeds.iter().enumerate() {
        out.push_str(&format!(
            "\n-- Memory {} --\n\n{}\n\n{}: {}\n",
            i + 1,
            record.message_timestamp,
            record.speaker,
            record.content,
        ));
    }
    out
}

async fn seed_context(
    bank: &MemoryBank,
    qa: &QAItem,
    speaker: &str,
    embedder: &dyn EmbeddingBackend,
    config: &EpisodeConfig,
) -> Result<Vec<MemoryRecord>> {
    if config.seed_context_k == 0 || bank.is_empty() {
        return Ok(Vec::new());
    }
    let filters = SearchFilters { speaker: Some(speaker.to_string()), session: None };
    if !config.ablations.disable_semantic {
        if !bank.fully_embedded() {
            return Err(Error::Validation(
                "seed context needs embeddings: embed the bank or disable semantic search".into(),
            ));
        }
        let query = embedder.embed(&[qa.question.clone()]).await?;
        let result = semantic_search(
            bank,
            &query[0],
            config.seed_context_k,
            &filters,
            0, // seed memories are single messages, not groups
        )?;
        return Ok(result.groups.into_iter().map(|g| g.group.center).collect());
    }

    // Keyword fallback: rank the speaker's records by the number of distinct
    // question terms they contain; corpus order breaks ties.
    let terms: Vec<String> = {
        let mut t = normalize_tokens(&qa.question);
        t.retain(|w| w.len() >= 3);
        t.dedup();
        t
    };
    let mut scored: Vec<(usize, &MemoryRecord)> = bank
        .records()
        .iter()
        .filter(|r| filters.matches(r))
        .map(|r| {
            let content = r.content.to_lowercase();
            let hits = terms.iter().filter(|t| content.contains(t.as_str())).count();
            (hits, r)
        })
        .filter(|(hits, _)| *hits > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.record_id.cmp(&b.1.record_id)));
    Ok(scored.into_iter().take(config.seed_context_k).map(|(_, r)| r.clone()).collect())
}
