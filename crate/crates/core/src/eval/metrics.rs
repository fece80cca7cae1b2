//! Answer metrics: exact match, token-overlap F1, cover exact match and
//! multiple-choice accuracy.
//!
//! All metrics are pure functions of the prediction/gold strings. String
//! equality metrics (EM, accuracy) and containment (CEM) compare under
//! [`normalize_text`], which removes English articles. F1 measures token
//! overlap under the same normalization except that articles are kept as
//! tokens, so "the quick brown fox" has four tokens against gold
//! "quick fox" (precision 2/4, recall 2/2, F1 = 2/3).

/// Normalizes an answer string: lowercase, strip punctuation, remove the
/// articles "a"/"an"/"the", collapse whitespace. Idempotent.
pub fn normalize_text(s: &str) -> String {
    let tokens = normalized_tokens(s);
    tokens.join(" ")
}

/// Tokens of [`normalize_text`]'s output (articles removed).
pub fn normalized_tokens(s: &str) -> Vec<String> {
    overlap_tokens(s)
        .into_iter()
        .filter(|w| !matches!(w.as_str(), "a" | "an" | "the"))
        .collect()
}

/// Tokens used for F1 overlap: lowercased, punctuation stripped, split on
/// whitespace, articles kept.
pub fn overlap_tokens(s: &str) -> Vec<String> {
    s.to_lowercase()
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .split_whitespace()
        .map(String::from)
        .collect()
}

/// Exact match: 1 iff prediction and gold are equal after normalization.
pub fn em(prediction: &str, gold: &str) -> u8 {
    u8::from(normalize_text(prediction) == normalize_text(gold))
}

/// Token-multiset F1 between prediction and gold.
///
/// 1 when both sides normalize to no tokens, 0 when exactly one side does.
pub fn f1(prediction: &str, gold: &str) -> f64 {
    let p = overlap_tokens(prediction);
    let g = overlap_tokens(gold);
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    if p.is_empty() || g.is_empty() {
        return 0.0;
    }
    let overlap = multiset_overlap(&p, &g);
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / p.len() as f64;
    let recall = overlap as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Cover exact match: 1 iff the normalized gold occurs as a contiguous
/// token subsequence of the normalized prediction.
pub fn cem(prediction: &str, gold: &str) -> u8 {
    let p = normalized_tokens(prediction);
    let g = normalized_tokens(gold);
    u8::from(contains_contiguous(&p, &g))
}

/// Multiple-choice accuracy: 1 iff the normalized labels are equal.
pub fn accuracy(prediction_label: &str, gold_label: &str) -> u8 {
    u8::from(normalize_text(prediction_label) == normalize_text(gold_label))
}

fn multiset_overlap(a: &[String], b: &[String]) -> usize {
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    for t in b {
        *counts.entry(t.as_str()).or_insert(0) += 1;
    }
    let mut overlap = 0;
    for t in a {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    overlap
}

fn contains_contiguous(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return true;
    }
    if needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_strips_articles_and_punctuation() {
        assert_eq!(normalize_text("The Eiffel Tower!"), "eiffel tower");
        assert_eq!(normalize_text(""), "");
    }

    #[test]
    fn f1_worked_example() {
        // precision 2/4, recall 2/2 -> 2 * (0.5 * 1.0) / 1.5
        let expected = 2.0 * (0.5 * 1.0) / 1.5;
        assert!((f1("the quick brown fox", "quick fox") - expected).abs() < 1e-12);
    }

    #[test]
    fn em_is_case_insensitive() {
        assert_eq!(em("paris", "Paris"), 1);
        assert_eq!(em("London", "Paris"), 0);
    }

    #[test]
    fn cem_containment() {
        assert_eq!(cem("It was Barack Obama.", "Barack Obama"), 1);
        assert_eq!(cem("Barack", "Barack Obama"), 0);
        // Tokens must be contiguous, not merely present.
        assert_eq!(cem("Barack H Obama", "Barack Obama"), 0);
    }

    #[test]
    fn f1_empty_sides() {
        assert_eq!(f1("", ""), 1.0);
        assert_eq!(f1("", "x"), 0.0);
        assert_eq!(f1("x", ""), 0.0);
        assert_eq!(f1("x y", "z"), 0.0);
    }

    #[test]
    fn accuracy_normalizes_labels() {
        assert_eq!(accuracy("c", "C"), 1);
        assert_eq!(accuracy("B", "C"), 0);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in ".{0,80}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once);
        }

        #[test]
        fn metric_chain_em_implies_cem_implies_f1(
            gold in proptest::collection::vec("[b-z]{1,6}", 1..5),
            prefix in proptest::collection::vec("[b-z]{1,6}", 0..3),
        ) {
            // Non-article content words only, so all tokenizations agree.
            let gold_s = gold.join(" ");
            let pred_s = format!("{} {}", prefix.join(" "), gold_s);
            prop_assert_eq!(em(&gold_s, &gold_s), 1);
            prop_assert_eq!(cem(&gold_s, &gold_s), 1);
            prop_assert_eq!(cem(&pred_s, &gold_s), 1);
            prop_assert!(f1(&pred_s, &gold_s) > 0.0);
        }

        #[test]
        fn metrics_are_pure(p in ".{0,40}", g in ".{1,40}") {
            prop_assert_eq!(em(&p, &g), em(&p, &g));
            prop_assert_eq!(f1(&p, &g), f1(&p, &g));
            prop_assert_eq!(cem(&p, &g), cem(&p, &g));
        }
    }
}
