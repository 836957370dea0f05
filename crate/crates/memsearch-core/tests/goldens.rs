//! Byte-for-byte golden tests for the three wire formats: the initial
//! prompt, the judge prompt, and the search tool response.
//!
//! Regenerate with `UPDATE_GOLDENS=1 cargo test -p memsearch-core --test
//! goldens` and review the diff like any other code change.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use memsearch_core::backends::{judge_prompt, EmbeddingBackend, HashingEmbedder};
use memsearch_core::corpus::{CategoryLabel, Conversation, Message, QAItem, Session};
use memsearch_core::episode::{build_initial_prompt, EpisodeConfig};
use memsearch_core::memory::{MemoryBank, MemoryGroup, MemoryRecord};
use memsearch_core::search::{format_tool_response, ScoredGroup, SearchMode, SearchResult};

fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn check_golden(name: &str, actual: &str) {
    let path = golden_path(name);
    if std::env::var("UPDATE_GOLDENS").is_ok() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing golden {}: {e}", path.display()));
    assert_eq!(
        actual,
        expected,
        "wire format drifted from frozen golden {name}; if intentional, regenerate with UPDATE_GOLDENS=1"
    );
}

fn record(speaker: &str, text: &str, session: u32, index: u32, ts: &str) -> MemoryRecord {
    MemoryRecord {
        record_id: format!("conv-50/{session}/{index}"),
        conversation_id: "conv-50".into(),
        speaker: speaker.into(),
        session_index: session,
        message_index: index,
        session_timestamp: ts.into(),
        message_timestamp: ts.into(),
        content: text.into(),
    }
}

#[test]
fn tool_response_format_is_frozen() {
    let ts1 = "11:54 am on 2 May, 2022";
    let ts2 = "3:00 pm on 25 May, 2022";
    let result = SearchResult {
        groups: vec![
            ScoredGroup {
                group: MemoryGroup {
                    center: record(
                        "Nate",
                        "Thanks! I usually play CS:GO, but I tried my hand at the local Street \
                         Fighter tournament this time since I play that game a lot with my \
                         friends, and turns out I'm really good!",
                        1,
                        3,
                        ts1,
                    ),
                    before: vec![
                        record(
                            "Nate",
                            "Gaming has been my focus - practicing a lot and even winning a few \
                             tournaments. Last week I won my second tournament!",
                            1,
                            1,
                            ts1,
                        ),
                        record("Joanna", "Wow, congrats! What game were you playing?", 1, 2, ts1),
                    ],
                    after: vec![
                        record(
                            "Joanna",
                            "Nice! That must have been a surprise. How did it feel to finally \
                             win one?",
                            1,
                            4,
                            ts1,
                        ),
                        record(
                            "Nate",
                            "It was super awesome! So much adrenaline went into that last match, \
                             and the other finalist even shook my hand! Enough about me though, \
                             how about you? What have you been up to?",
                            1,
                            5,
                            ts1,
                        ),
                    ],
                },
                score: 1.0,
            },
            ScoredGroup {
                group: MemoryGroup {
                    center: record(
                        "Nate",
                        "Hey Jo! Been ages since we last talked. Here's something cool that \
                         happened the other day - I took Max for a walk and ran into this super \
                         nice couple who had a dog. It turns out they live close by. We decided \
                         to do doggy playdates, which is awesome considering we all need friends \
                         for our pets.",
                        2,
                        1,
                        ts2,
                    ),
                    before: vec![],
                    after: vec![
                        record(
                            "Joanna",
                            "Hey Nate! Great to hear from you. Sounds like a nice encounter on \
                             your walk. Connecting with others who have pets can be uplifting \
                             and rewarding.",
                            2,
                            2,
                            ts2,
                        ),
                        record(
                            "Nate",
                            "It's like fate. Having a walking buddy for Max will be great. He \
                             really likes the other dog too!",
                            2,
                            3,
                            ts2,
                        ),
                    ],
                },
                score: 1.0,
            },
        ],
        mode_used: SearchMode::Keyword,
        filters_echoed: "speaker: Nate".into(),
    };
    check_golden("tool_response.txt", &format_tool_response(&result, 17));
}

#[test]
fn empty_tool_response_is_frozen() {
    let result = SearchResult {
        groups: vec![],
        mode_used: SearchMode::Semantic,
        filters_echoed: String::new(),
    };
    check_golden("tool_response_empty.txt", &format_tool_response(&result, 19));
}

#[test]
fn judge_prompt_is_frozen() {
    let prompt = judge_prompt(
        "Do you remember what I got the last time I went to Hawaii?",
        "A shell necklace",
        "she got a shell necklace in Hawaii",
    );
    check_golden("judge_prompt.txt", &prompt);
}

#[tokio::test]
async fn initial_prompt_is_frozen() {
    let conv = Conversation {
        conversation_id: "conv-50".into(),
        speakers: ["Nate".into(), "Joanna".into()],
        sessions: vec![
            Session {
                session_index: 1,
                timestamp: "11:54 am on 2 May, 2022".into(),
                messages: vec![
                    Message {
                        speaker: "Nate".into(),
                        text: "Gaming has been my focus - practicing a lot and even winning a \
                               few tournaments. Last week I won my second tournament!"
                            .into(),
                        message_index: 1,
                        timestamp: "11:54 am on 2 May, 2022".into(),
                    },
                    Message {
                        speaker: "Joanna".into(),
                        text: "Wow, congrats! What game were you playing?".into(),
                        message_index: 2,
                        timestamp: "11:54 am on 2 May, 2022".into(),
                    },
                ],
            },
            Session {
                session_index: 2,
                timestamp: "3:00 pm on 25 May, 2022".into(),
                messages: vec![
                    Message {
                        speaker: "Nate".into(),
                        text: "I took Max for a walk and ran into a super nice couple with a dog."
                            .into(),
                        message_index: 1,
                        timestamp: "3:00 pm on 25 May, 2022".into(),
                    },
                    Message {
                        speaker: "Joanna".into(),
                        text: "Sounds like a lovely encounter on your walk.".into(),
                        message_index: 2,
                        timestamp: "3:00 pm on 25 May, 2022".into(),
                    },
                ],
            },
        ],
    };
    let embedder = HashingEmbedder::new(32);
    let texts: Vec<String> = conv
        .sessions
        .iter()
        .flat_map(|s| s.messages.iter().map(|m| m.text.clone()))
        .collect();
    let vectors = embedder.embed(&texts).await.unwrap();
    let mut map = HashMap::new();
    let mut i = 0;
    for s in &conv.sessions {
        for m in &s.messages {
            map.insert(
                MemoryRecord::make_id(&conv.conversation_id, s.session_index, m.message_index),
                vectors[i].clone(),
            );
            i += 1;
        }
    }
    let bank = Arc::new(MemoryBank::build(&[conv], Some(&map), 32, 4).unwrap());
    let qa = QAItem {
        question_id: "conv-50/q/0".into(),
        conversation_id: "conv-50".into(),
        question: "What tournament did Nate win?".into(),
        gold_answer: "a Street Fighter tournament".into(),
        category_code: 4,
        category_label: CategoryLabel::SingleHop,
        excluded_from_eval: false,
        evidence_refs: None,
    };
    let config = EpisodeConfig { seed_context_k: 2, ..EpisodeConfig::default() };
    let messages = build_initial_prompt(&bank, &qa, &embedder, &config).await.unwrap();
    let rendered = format!("[system]\n{}\n\n[user]\n{}", messages[0].content, messages[1].content);
    check_golden("initial_prompt.txt", &rendered);
}
