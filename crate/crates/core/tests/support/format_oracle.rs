//! Brute-force format checker and trajectory fuzzer, written without the
//! engine's lexer or rule code.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

pub const TAGS: [&str; 6] = ["think", "graphrag", "llm", "search", "information", "answer"];

/// Independent lexer: the text is well formed iff its tag markers strictly
/// alternate open/close of the same tag and at least one pair exists.
/// Returns the (tag, content) pairs of a well-formed text, `None` otherwise.
pub fn oracle_segments(text: &str) -> Option<Vec<(String, String)>> {
    static MARKER: OnceLock<Regex> = OnceLock::new();
    let marker = MARKER.get_or_init(|| Regex::new(r"<(/?)(think|graphrag|llm|search|information|answer)>").unwrap());
    let mut out = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for m in marker.captures_iter(text) {
        let whole = m.get(0).unwrap();
        let closing = !m[1].is_empty();
        let tag = m[2].to_string();
        match (&open, closing) {
            (None, false) => open = Some((tag, whole.end())),
            (Some((t, start)), true) if *t == tag => {
                out.push((tag, text[*start..whole.start()].to_string()));
                open = None;
            }
            _ => return None,
        }
    }
    if open.is_some() || out.is_empty() {
        return None;
    }
    Some(out)
}

/// Rule name to tenths for every rule that fires; the clipped total is
/// `min(10, sum)`.
pub fn oracle_rules(text: &str, graphrags: &[&str], llms: &[&str]) -> BTreeMap<&'static str, u32> {
    let mut fired = BTreeMap::new();
    let Some(segs) = oracle_segments(text) else {
        fired.insert("fatal", 10);
        return fired;
    };
    let kind = |i: usize| segs[i].0.as_str();
    let body = |i: usize| segs[i].1.trim();
    let n = segs.len();
    let valid_g = |i: usize| kind(i) == "graphrag" && graphrags.contains(&body(i));
    let valid_l = |i: usize| kind(i) == "llm" && llms.contains(&body(i));

    let mut thinks = 0;
    let mut searches = 0;
    let mut answers = 0;
    let mut first_valid_g = None;
    let mut first_llm = None;
    for i in 0..n {
        match kind(i) {
            "think" => thinks += 1,
            "search" => searches += 1,
            "answer" => answers += 1,
            _ => {}
        }
        if first_valid_g.is_none() && valid_g(i) {
            first_valid_g = Some(i);
        }
        if first_llm.is_none() && kind(i) == "llm" {
            first_llm = Some(i);
        }
    }

    if thinks == 0 {
        fired.insert("missing-think", 4);
    }
    if let Some(l) = first_llm {
        let before = match first_valid_g {
            None => true,
            Some(g) => l < g,
        };
        if before {
            fired.insert("llm-before-graphrag", 8);
        }
    }
    if first_valid_g.is_none() {
        fired.insert("missing-graphrag", if searches > 0 { 6 } else { 4 });
    }
    if (0..n).any(|i| kind(i) == "graphrag" && !valid_g(i)) {
        fired.insert("invalid-graphrag-name", 2);
    }
    // Walk back from each search to the previous one.
    for i in (0..n).filter(|&i| kind(i) == "search") {
        let mut j = i;
        let mut window_thinks = 0;
        let mut window_llm = false;
        while j > 0 && kind(j - 1) != "search" {
            j -= 1;
            if kind(j) == "think" {
                window_thinks += 1;
            }
            if valid_l(j) {
                window_llm = true;
            }
        }
        if window_thinks < 2 {
            fired.insert("missing-second-stage-reasoning", 3);
        }
        if !window_llm {
            fired.insert("missing-llm-before-search", 3);
        }
    }
    if (0..n).any(|i| kind(i) == "llm" && !valid_l(i)) {
        fired.insert("invalid-llm-name", 1);
    }
    if searches == 0 {
        fired.insert("missing-search", 4);
    }
    let bad_search = (0..n).any(|i| {
        kind(i) == "search" && {
            let c = &segs[i].1;
            c.chars().filter(|&ch| ch == ':').count() != 1 || c.chars().filter(|&ch| ch == ';').count() != 1
        }
    });
    if bad_search {
        fired.insert("invalid-search-format", 3);
    }
    if answers != 1 {
        fired.insert("invalid-answer-cardinality", 3);
    }
    if (0..n).any(|i| kind(i) == "think" && ["", "...", "…"].contains(&body(i))) {
        fired.insert("empty-reasoning", 2);
    }
    fired
}

pub fn oracle_penalty_tenths(fired: &BTreeMap<&'static str, u32>) -> u32 {
    fired.values().sum::<u32>().min(10)
}

const THINKS: [&str; 6] = ["reason", "  ", "...", "…", "checks the evidence", ""];
const QUERIES: [&str; 4] = ["who wrote it", "when", "a", "Q"];

fn pick<'a, R: Rng>(rng: &mut R, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().unwrap()
}

fn search_content<R: Rng>(rng: &mut R, graphrags: &[&str], llms: &[&str]) -> String {
    let q = pick(rng, &QUERIES);
    let l = if rng.gen_bool(0.8) { pick(rng, llms) } else { "NoSuchLLM" };
    let g = if rng.gen_bool(0.8) { pick(rng, graphrags) } else { "NoSuchRAG" };
    match rng.gen_range(0..10) {
        0 => format!("{q} {l} {g}"),
        1 => format!("{q}:{l}"),
        2 => format!("{q}:{l};{g};extra"),
        3 => format!("{q}:{l}:{g};x"),
        4 => format!("{q};{l}:{g}"),
        _ => format!("{q}:{l};{g}"),
    }
}

fn tag_content<R: Rng>(rng: &mut R, tag: &str, graphrags: &[&str], llms: &[&str]) -> String {
    match tag {
        "think" => if rng.gen_bool(0.7) { "reason".to_string() } else { pick(rng, &THINKS).to_string() },
        "graphrag" => if rng.gen_bool(0.85) { pick(rng, graphrags).to_string() } else { " Unknown RAG ".to_string() },
        "llm" => if rng.gen_bool(0.85) { format!(" {} ", pick(rng, llms)) } else { "GPT-X".to_string() },
        "search" => search_content(rng, graphrags, llms),
        "information" => "Answer: x".to_string(),
        _ => pick(rng, &["Beijing", "", "entity 3"]).to_string(),
    }
}

/// Random trajectory text. Half the cases are free tag sequences; the other
/// half follow the routing template with dropped or swapped segments. A few
/// get a stray marker.
pub fn fuzz_trajectory<R: Rng>(rng: &mut R, graphrags: &[&str], llms: &[&str]) -> String {
    let mut tags: Vec<&str> = Vec::new();
    if rng.gen_bool(0.5) {
        for _ in 0..rng.gen_range(0..14) {
            tags.push(TAGS[rng.gen_range(0..TAGS.len())]);
        }
    } else {
        for _ in 0..rng.gen_range(1..=3) {
            for tag in ["think", "graphrag", "think", "llm", "search", "information"] {
                if rng.gen_bool(0.93) {
                    tags.push(tag);
                }
            }
        }
        tags.extend(["think", "answer"].into_iter().filter(|_| rng.gen_bool(0.93)));
        if tags.len() > 1 && rng.gen_bool(0.3) {
            let (a, b) = (rng.gen_range(0..tags.len()), rng.gen_range(0..tags.len()));
            tags.swap(a, b);
        }
    }
    let mut out = String::new();
    for tag in tags {
        if rng.gen_bool(0.1) {
            out.push_str(pick(rng, &[" ", "\n", "free text ", "a < b > c "]));
        }
        let content = tag_content(rng, tag, graphrags, llms);
        out.push_str(&format!("<{tag}>{content}</{tag}>"));
    }
    if rng.gen_bool(0.08) {
        let tag = TAGS[rng.gen_range(0..TAGS.len())];
        let stray = if rng.gen_bool(0.5) { format!("<{tag}>") } else { format!("</{tag}>") };
        let at = rng.gen_range(0..=out.len());
        let at = (0..=at).rev().find(|&i| out.is_char_boundary(i)).unwrap_or(0);
        out.insert_str(at, &stray);
    }
    out
}

/// Canonical well-formed prefix used to build targeted cases.
pub fn well_formed_search(graphrag: &str, llm: &str) -> String {
    format!("<think>r1</think><graphrag>{graphrag}</graphrag><think>r2</think><llm>{llm}</llm><search>q:{llm};{graphrag}</search>")
}
