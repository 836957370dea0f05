//! Deterministic synthetic dataset in the released LoCoMo JSON layout, for
//! offline development and tests.
//!
//! Not a benchmark. The aggregate statistics mirror the real corpus so
//! counting-sensitive code paths behave as in production: 10 conversations,
//! 1540 questions, the training conversation `conv-48` with 30 sessions and
//! 681 turns and 191 questions, and per-category question fractions of
//! roughly 54.6% single-hop, 18.3% multi-hop, 6.2% open-domain and 20.8%
//! temporal. Every question's gold answer is a phrase planted verbatim in a
//! generated message, so search and reward paths have real signal to find.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::Result;

/// Knobs for the synthetic dataset. Defaults reproduce the full-size corpus.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    /// Internal generation seed; the fixed default keeps files byte-stable.
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { seed: 0x5eed_cafe }
    }
}

/// Per-conversation plan: id, speakers, session count, message count, and
/// question counts by category code 4/1/3/2/5.
struct ConvPlan {
    id: &'static str,
    speakers: (&'static str, &'static str),
    sessions: usize,
    messages: usize,
    qa: [usize; 5], // [single-hop, multi-hop, open-domain, temporal, adversarial]
}

/// The ids are chosen so that `conv-48` sorts first; the seed-42 shuffle
/// used by the split places the lexicographically first id in the train set.
const PLANS: [ConvPlan; 10] = [
    ConvPlan { id: "conv-48", speakers: ("Deborah", "Jolene"), sessions: 30, messages: 681, qa: [104, 35, 12, 39, 1] },
    ConvPlan { id: "conv-50", speakers: ("Nate", "Joanna"), sessions: 26, messages: 540, qa: [82, 27, 9, 31, 1] },
    ConvPlan { id: "conv-52", speakers: ("Marcus", "Elena"), sessions: 19, messages: 369, qa: [82, 28, 9, 31, 0] },
    ConvPlan { id: "conv-55", speakers: ("Priya", "Tom"), sessions: 24, messages: 498, qa: [82, 27, 10, 31, 0] },
    ConvPlan { id: "conv-59", speakers: ("Sam", "Ruth"), sessions: 28, messages: 602, qa: [82, 28, 9, 31, 0] },
    ConvPlan { id: "conv-61", speakers: ("Leo", "Maya"), sessions: 22, messages: 455, qa: [82, 27, 9, 32, 0] },
    ConvPlan { id: "conv-66", speakers: ("Iris", "Oscar"), sessions: 32, messages: 689, qa: [82, 28, 9, 31, 0] },
    ConvPlan { id: "conv-73", speakers: ("Nina", "Paul"), sessions: 27, messages: 575, qa: [82, 27, 9, 32, 0] },
    ConvPlan { id: "conv-81", speakers: ("Ada", "Victor"), sessions: 25, messages: 520, qa: [82, 28, 9, 31, 0] },
    ConvPlan { id: "conv-94", speakers: ("Grace", "Hugo"), sessions: 29, messages: 633, qa: [81, 27, 10, 31, 0] },
];

const ACTIVITIES: [&str; 10] = [
    "hiking", "painting", "gardening", "baking", "climbing", "swimming", "photography",
    "pottery", "chess", "cycling",
];
const OBJECTS: [&str; 10] = [
    "sourdough loaf", "tomato plants", "watercolor set", "trail map", "film camera",
    "chess board", "climbing shoes", "herb garden", "banana bread", "street mural",
];
const EVENTS: [&str; 10] = [
    "farmers market", "book club", "charity run", "art fair", "cooking class",
    "open mic night", "science museum", "jazz concert", "community garden", "poetry reading",
];
const ADJECTIVES: [&str; 6] = [
    "amazing", "exhausting", "peaceful", "hilarious", "challenging", "refreshing",
];
const MONTHS: [&str; 12] = [
    "January", "February", "March", "April", "May", "June", "July", "August", "September",
    "October", "November", "December",
];

/// Builds the synthetic dataset as a LoCoMo-layout JSON document.
pub fn fixture_dataset_json(spec: &FixtureSpec) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let samples: Vec<Value> = PLANS.iter().map(|p| build_sample(p, &mut rng)).collect();
    Value::Array(samples)
}

/// Writes the synthetic dataset to `path` as pretty JSON.
pub fn write_fixture_dataset(spec: &FixtureSpec, path: &Path) -> Result<()> {
    let doc = fixture_dataset_json(spec);
    std::fs::write(path, serde_json::to_vec_pretty(&doc)?)?;
    Ok(())
}

/// A generated message plus the phrase planted in it, kept so questions can
/// reference it.
struct Planted {
    session: usize,
    message: usize,
    speaker: String,
    phrase: String,
    session_date: String, // "10 January, 2023" part of the timestamp
}

fn build_sample(plan: &ConvPlan, rng: &mut ChaCha8Rng) -> Value {
    let mut conversation = Map::new();
    conversation.insert("speaker_a".into(), json!(plan.speakers.0));
    conversation.insert("speaker_b".into(), json!(plan.speakers.1));

    // Sessions advance roughly a week at a time through 2023, except the
    // hand-planted opening of conv-50 which keeps its 2022 dates.
    let mut day_cursor = 3 + (rng.gen_range(0..5) as usize);
    let mut month_cursor = 0usize;
    let mut planted: Vec<Planted> = Vec::new();

    let mut per_session = distribute(plan.messages, plan.sessions);
    let handwritten = if plan.id == "conv-50" { handwritten_opening() } else { Vec::new() };
    for (i, (msgs, ts)) in handwritten.iter().enumerate() {
        per_session[i] = msgs.len();
        let _ = ts;
    }
    // Rebalance the remaining sessions so the total still matches the plan.
    if !handwritten.is_empty() {
        let fixed: usize = handwritten.iter().map(|(m, _)| m.len()).sum();
        let rest = distribute(plan.messages - fixed, plan.sessions - handwritten.len());
        for (i, n) in rest.iter().enumerate() {
            per_session[handwritten.len() + i] = *n;
        }
    }

    for (s, &n_msgs) in per_session.iter().enumerate() {
        let session_index = s + 1;
        if let Some((msgs, ts)) = handwritten.get(s) {
            let date_part = ts.split(" on ").nth(1).unwrap_or(ts).to_string();
            let rendered: Vec<Value> = msgs
                .iter()
                .enumerate()
                .map(|(m, (speaker, text))| {
                    json!({
                        "speaker": speaker,
                        "dia_id": format!("D{}:{}", session_index, m + 1),
                        "text": text,
                    })
                })
                .collect();
            // The tournament message is the phrase anchor for this session.
            planted.push(Planted {
                session: session_index,
                message: 1,
                speaker: msgs[0].0.clone(),
                phrase: "tournament".into(),
                session_date: date_part,
            });
            conversation.insert(format!("session_{session_index}"), Value::Array(rendered));
            conversation.insert(format!("session_{session_index}_date_time"), json!(ts));
            continue;
        }

        let hour = rng.gen_range(1..=11);
        let minute = rng.gen_range(0..60);
        let half = if rng.gen_bool(0.5) { "am" } else { "pm" };
        let date_part = format!("{} {}, 2023", day_cursor, MONTHS[month_cursor]);
        let timestamp = format!("{}:{:02} {} on {}", hour, minute, half, date_part);
        day_cursor += 6 + rng.gen_range(0..6) as usize;
        if day_cursor > 27 {
            day_cursor -= 25;
            month_cursor = (month_cursor + 1).min(11);
        }

        let mut messages = Vec::with_capacity(n_msgs);
        for m in 0..n_msgs {
            let speaker = if m % 2 == 0 { plan.speakers.0 } else { plan.speakers.1 };
            let (text, phrase) = gen_message(rng);
            planted.push(Planted {
                session: session_index,
                message: m + 1,
                speaker: speaker.into(),
                phrase,
                session_date: date_part.clone(),
            });
            messages.push(json!({
                "speaker": speaker,
                "dia_id": format!("D{}:{}", session_index, m + 1),
                "text": text,
            }));
        }
        conversation.insert(format!("session_{session_index}"), Value::Array(messages));
        conversation.insert(format!("session_{session_index}_date_time"), json!(timestamp));
    }

    // Deal category codes into a shuffled order, then write one question per
    // code, each pointing at a distinct planted message where possible.
    let mut codes: Vec<u8> = Vec::new();
    for (slot, &count) in plan.qa.iter().enumerate() {
        let code = [4u8, 1, 3, 2, 5][slot];
        codes.extend(std::iter::repeat(code).take(count));
    }
    codes.shuffle(rng);

    let mut qa = Vec::with_capacity(codes.len());
    for code in codes {
        let target = &planted[rng.gen_range(0..planted.len())];
        qa.push(gen_question(code, target));
    }

    let mut sample = Map::new();
    sample.insert("sample_id".into(), json!(plan.id));
    sample.insert("conversation".into(), Value::Object(conversation));
    sample.insert("qa".into(), Value::Array(qa));
    Value::Object(sample)
}

fn gen_message(rng: &mut ChaCha8Rng) -> (String, String) {
    let adj = ADJECTIVES[rng.gen_range(0..ADJECTIVES.len())];
    match rng.gen_range(0..5) {
        0 => {
            let event = EVENTS[rng.gen_range(0..EVENTS.len())];
            (format!("I spent the weekend at the {event} and it was {adj}."), event.into())
        }
        1 => {
            let act = ACTIVITIES[rng.gen_range(0..ACTIVITIES.len())];
            let obj = OBJECTS[rng.gen_range(0..OBJECTS.len())];
            (format!("Been getting into {act} lately, even bought a {obj}."), act.into())
        }
        2 => {
            let act = ACTIVITIES[rng.gen_range(0..ACTIVITIES.len())];
            let obj = OBJECTS[rng.gen_range(0..OBJECTS.len())];
            (format!("My {act} session today felt {adj}, I finally finished the {obj}."), obj.into())
        }
        3 => {
            let event = EVENTS[rng.gen_range(0..EVENTS.len())];
            let obj = OBJECTS[rng.gen_range(0..OBJECTS.len())];
            (format!("Guess what, I won a prize at the {event} with my {obj}!"), obj.into())
        }
        _ => {
            let act = ACTIVITIES[rng.gen_range(0..ACTIVITIES.len())];
            let event = EVENTS[rng.gen_range(0..EVENTS.len())];
            (format!("Thinking about trying {act} next month with friends from the {event}."), act.into())
        }
    }
}

fn gen_question(code: u8, target: &Planted) -> Value {
    let evidence = json!([format!("D{}:{}", target.session, target.message)]);
    match code {
        4 => json!({
            "question": format!("What did {} mention in session {} of their chats?", target.speaker, target.session),
            "answer": target.phrase,
            "evidence": evidence,
            "category": 4,
        }),
        1 => json!({
            "question": format!("Which interest did {} bring up more than once across sessions?", target.speaker),
            "answer": target.phrase,
            "evidence": evidence,
            "category": 1,
        }),
        3 => json!({
            "question": format!("What would {} likely enjoy, given what they talked about?", target.speaker),
            "answer": target.phrase,
            "evidence": evidence,
            "category": 3,
        }),
        2 => json!({
            "question": format!("When did {} talk about the {}?", target.speaker, target.phrase),
            "answer": target.session_date.replace(',', ""),
            "evidence": evidence,
            "category": 2,
        }),
        _ => json!({
            "question": format!("Did {} ever mention moving to another country?", target.speaker),
            "adversarial_answer": "Not mentioned in the conversation",
            "category": 5,
        }),
    }
}

/// Opening two sessions of conv-50; the retrieval examples in the docs and
/// tests point at these messages.
#[allow(clippy::type_complexity)]
fn handwritten_opening() -> Vec<(Vec<(String, String)>, String)> {
    let s1: Vec<(String, String)> = vec![
        ("Nate".into(), "Gaming has been my focus - practicing a lot and even winning a few tournaments. Last week I won my second tournament!".into()),
        ("Joanna".into(), "Wow, congrats! What game were you playing?".into()),
        ("Nate".into(), "Thanks! I usually play CS:GO, but I tried my hand at the local Street Fighter tournament this time since I play that game a lot with my friends, and turns out I'm really good!".into()),
        ("Joanna".into(), "Nice! That must have been a surprise. How did it feel to finally win one?".into()),
        ("Nate".into(), "It was super awesome! So much adrenaline went into that last match, and the other finalist even shook my hand! Enough about me though, how about you? What have you been up to?".into()),
    ];
    let s2: Vec<(String, String)> = vec![
        ("Nate".into(), "Hey Jo! Been ages since we last talked. Here's something cool that happened the other day - I took Max for a walk and ran into this super nice couple who had a dog. It turns out they live close by. We decided to do doggy playdates, which is awesome considering we all need friends for our pets.".into()),
        ("Joanna".into(), "Hey Nate! Great to hear from you. Sounds like a nice encounter on your walk. Connecting with others who have pets can be uplifting and rewarding.".into()),
        ("Nate".into(), "It's like fate. Having a walking buddy for Max will be great. He really likes the other dog too!".into()),
    ];
    vec![
        (s1, "11:54 am on 2 May, 2022".into()),
        (s2, "3:00 pm on 25 May, 2022".into()),
    ]
}

/// Splits `total` into `parts` counts differing by at most one.
fn distribute(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|i| base + usize::from(i < extra)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_locomo_value, split_dataset, CategoryLabel};

    #[test]
    fn fixture_matches_published_statistics() {
        let doc = fixture_dataset_json(&FixtureSpec::default());
        let ds = load_locomo_value(&doc).unwrap();
        assert_eq!(ds.entries.len(), 10);
        assert_eq!(ds.total_qa(), 1540);

        let conv48 = ds.entry("conv-48").unwrap();
        assert_eq!(conv48.conversation.sessions.len(), 30);
        assert_eq!(conv48.conversation.message_count(), 681);
        assert_eq!(conv48.qa.len(), 191);

        let count = |label: CategoryLabel| {
            ds.entries
                .iter()
                .flat_map(|e| &e.qa)
                .filter(|q| q.category_label == label)
                .count() as f64
        };
        let total = ds.total_qa() as f64;
        let pct = |label| count(label) / total * 100.0;
        assert!((pct(CategoryLabel::SingleHop) - 54.6).abs() <= 0.5);
        assert!((pct(CategoryLabel::MultiHop) - 18.3).abs() <= 0.5);
        assert!((pct(CategoryLabel::OpenDomain) - 6.2).abs() <= 0.5);
        assert!((pct(CategoryLabel::Temporal) - 20.8).abs() <= 0.5);
    }

    #[test]
    fn seed_42_split_selects_conv_48() {
        let doc = fixture_dataset_json(&FixtureSpec::default());
        let ds = load_locomo_value(&doc).unwrap();
        let split = split_dataset(&ds.conversation_ids(), 42, 1).unwrap();
        assert_eq!(split.train_conversations, vec!["conv-48".to_string()]);
        assert_eq!(split.validation_conversations.len(), 9);
    }

    #[test]
    fn fixture_is_byte_stable() {
        let a = serde_json::to_vec(&fixture_dataset_json(&FixtureSpec::default())).unwrap();
        let b = serde_json::to_vec(&fixture_dataset_json(&FixtureSpec::default())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gold_answers_are_planted_in_the_conversation() {
        let doc = fixture_dataset_json(&FixtureSpec::default());
        let ds = load_locomo_value(&doc).unwrap();
        let entry = ds.entry("conv-52").unwrap();
        for qa in entry.qa.iter().filter(|q| q.category_code == 4).take(20) {
            let found = entry
                .conversation
                .sessions
                .iter()
                .flat_map(|s| &s.messages)
                .any(|m| m.text.contains(&qa.gold_answer));
            assert!(found, "answer {:?} not planted", qa.gold_answer);
        }
    }
}
