//! Token-level F1 between predicted and gold answers.

use std::collections::HashSet;

/// Normalizes an answer for token metrics: lowercase, strip punctuation,
/// split on whitespace. No article removal. Every token metric in the crate
/// goes through this one function.
pub fn normalize_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// F1 over the SETS of normalized tokens: `2PR / (P + R)`, and 0 when either
/// set is empty or the intersection is empty.
pub fn token_f1(predicted: &str, gold: &str) -> f64 {
    let pred: HashSet<String> = normalize_tokens(predicted).into_iter().collect();
    let gold: HashSet<String> = normalize_tokens(gold).into_iter().collect();
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let common = pred.intersection(&gold).count() as f64;
    if common == 0.0 {
        return 0.0;
    }
    let precision = common / pred.len() as f64;
    let recall = common / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
