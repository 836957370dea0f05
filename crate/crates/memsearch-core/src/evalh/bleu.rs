//! BLEU-1: modified unigram precision with clipping, times a brevity
//! penalty. Shares the normalization pipeline with token F1.

use std::collections::HashMap;

use crate::rlvr::normalize_tokens;

/// Unigram BLEU with counts clipped by the gold counts and brevity penalty
/// `exp(1 - len_gold / len_pred)` when the prediction is shorter than the
/// gold answer; 0 for an empty prediction.
pub fn bleu1(predicted: &str, gold: &str) -> f64 {
    let pred = normalize_tokens(predicted);
    let gold = normalize_tokens(gold);
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }

    let mut gold_counts: HashMap<&str, usize> = HashMap::new();
    for w in &gold {
        *gold_counts.entry(w.as_str()).or_default() += 1;
    }
    let mut pred_counts: HashMap<&str, usize> = HashMap::new();
    for w in &pred {
        *pred_counts.entry(w.as_str()).or_default() += 1;
    }
    let clipped: usize = pred_counts
        .iter()
        .map(|(w, &c)| c.min(gold_counts.get(w).copied().unwrap_or(0)))
        .sum();
    let precision = clipped as f64 / pred.len() as f64;

    let brevity_penalty = if pred.len() < gold.len() {
        (1.0 - gold.len() as f64 / pred.len() as f64).exp()
    } else {
        1.0
    };
    precision * brevity_penalty
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_strings_score_one() {
        assert_eq!(bleu1("a shell necklace", "a shell necklace"), 1.0);
    }

    #[test]
    fn short_prediction_pays_the_brevity_penalty() {
        // precision 1.0, BP = exp(1 - 3/2) ~ 0.6065
        let b = bleu1("shell necklace", "a shell necklace");
        assert!((b - (1.0_f64 - 1.5).exp()).abs() < 1e-12, "{b}");
        assert!((b - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        assert_eq!(bleu1("", "anything at all"), 0.0);
    }

    #[test]
    fn repeated_tokens_are_clipped_by_gold_counts() {
        // pred "the the the" vs gold "the cat": clipped count 1, precision 1/3,
        // BP = exp(1 - 2/3).
        let b = bleu1("the the the", "the cat");
        let expect = (1.0 / 3.0) * 1.0; // len_pred 3 >= len_gold 2, BP = 1
        assert!((b - expect).abs() < 1e-12, "{b}");
    }

    #[test]
    fn long_prediction_has_no_brevity_penalty_but_low_precision() {
        let b = bleu1("the cat sat on a very large comfortable mat", "the cat");
        assert!(b < 0.3);
        assert!(b > 0.0);
    }
}
