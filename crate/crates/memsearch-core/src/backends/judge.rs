//! Judge prompt construction and verdict parsing, shared by the HTTP judge
//! and the tests. The prompt is a stable wire format pinned by golden tests;
//! evaluation and training both go through it so the J metric means the
//! same thing everywhere.

use serde_json::Value;

use super::Verdict;

/// Renders the binary-classification judge prompt with the three slots
/// filled.
pub fn judge_prompt(question: &str, golden_answer: &str, generated_answer: &str) -> String {
    format!(
        r#"Your task is to label an answer to a question as 'CORRECT' or 'WRONG'. You will be given the following data:
    (1) a question (posed by one user to another user),
    (2) a 'gold' (ground truth) answer,
    (3) a generated answer
which you will score as CORRECT/WRONG.

The point of the question is to ask about something one user should know about the other user based on their prior conversations.
The gold answer will usually be a concise and short answer that includes the referenced topic, for example:

Question: Do you remember what I got the last time I went to Hawaii?
Gold answer: A shell necklace

The generated answer might be much longer, but you should be generous with your grading - as long as it touches on the same topic as the gold answer, it should be counted as CORRECT.

For time related questions, the gold answer will be a specific date, month, year, etc. The generated answer might be much longer or use relative time references (like "last Tuesday" or "next month"), but you should be generous with your grading - as long as it refers to the same date or time period as the gold answer, it should be counted as CORRECT. Even if the format differs (e.g., "May 7th" vs "7 May"), consider it CORRECT if it's the same date.

Now it's time for the real question:

Question: {question}
Gold answer: {golden_answer}
Generated answer: {generated_answer}

First, provide a short (one sentence) explanation of your reasoning, then finish with CORRECT or WRONG.

Do NOT include both CORRECT and WRONG in your response, or it will break the evaluation script.

Just return the label CORRECT or WRONG in a json format with the key as "label"."#
    )
}

/// Reminder appended when the first judge reply fails to parse.
pub const STRICT_FORMAT_REMINDER: &str = "Your previous reply could not be parsed. Respond with ONLY a JSON object of the form {\"label\": \"CORRECT\"} or {\"label\": \"WRONG\"}.";

/// Extracts the verdict from a judge reply.
///
/// The reply usually contains a one-sentence explanation followed by a JSON
/// object with a `label` key; the label is matched case-insensitively. When
/// several JSON objects appear, the last parseable one wins.
pub fn parse_verdict(reply: &str) -> Option<Verdict> {
    let mut verdict = None;
    for (start, _) in reply.match_indices('{') {
        if let Some(object) = balanced_object(&reply[start..]) {
            if let Ok(value) = serde_json::from_str::<Value>(object) {
                if let Some(label) = value.get("label").and_then(Value::as_str) {
                    match label.trim().to_ascii_uppercase().as_str() {
                        "CORRECT" => verdict = Some(Verdict::Correct),
                        "WRONG" => verdict = Some(Verdict::Wrong),
                        _ => {}
                    }
                }
            }
        }
    }
    verdict
}

/// The shortest balanced `{...}` prefix of `s`, tracking string literals so
/// braces inside them do not count.
fn balanced_object(s: &str) -> Option<&str> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&s[..=i]);
                }
            }
            _ => {}
        }
    }
    None
}
