//! Exact-match and token-F1 answer scoring.

use std::collections::HashMap;

/// Unicode punctuation stripped alongside ASCII punctuation.
const EXTRA_PUNCT: &[char] = &[
    '\u{2010}', '\u{2011}', '\u{2012}', '\u{2013}', '\u{2014}', '\u{2015}', '\u{2018}', '\u{2019}', '\u{201C}', '\u{201D}',
    '\u{2026}', '\u{00AB}', '\u{00BB}', '\u{00BF}', '\u{00A1}', '\u{00B7}',
];

/// Lowercase, drop punctuation, drop the articles a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let no_punct: String =
        lowered.chars().filter(|c| !c.is_ascii_punctuation() && !EXTRA_PUNCT.contains(c)).collect();
    no_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1.0 when the normalized answer equals any normalized gold; an absent answer scores 0.
pub fn exact_match(answer: Option<&str>, golds: &[String]) -> f64 {
    let Some(answer) = answer else { return 0.0 };
    let a = normalize_answer(answer);
    if golds.iter().any(|g| normalize_answer(g) == a) {
        1.0
    } else {
        0.0
    }
}

fn token_f1(pred: &str, gold: &str) -> f64 {
    let p: Vec<&str> = pred.split_whitespace().collect();
    let g: Vec<&str> = gold.split_whitespace().collect();
    if p.is_empty() || g.is_empty() {
        return if p.is_empty() && g.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in &p {
        if let Some(c) = counts.get_mut(t) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / p.len() as f64;
    let recall = common as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Max over golds of token-level F1 on normalized text.
pub fn f1_score(answer: Option<&str>, golds: &[String]) -> f64 {
    let Some(answer) = answer else { return 0.0 };
    let a = normalize_answer(answer);
    golds.iter().map(|g| token_f1(&a, &normalize_answer(g))).fold(0.0, f64::max)
}
