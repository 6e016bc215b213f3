//! Seeded synthetic worlds.
//!
//! Each question has a topic and a hop count. The topic fixes the one
//! retriever holding its evidence; the hop count fixes the smallest tier
//! that can answer (1 hop: any tier, 2 hops: medium and up, 3 hops: large).

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{QuestionAttributes, QuestionRecord};
use crate::backends::{BackendRegistry, FailureMode, PairOdds, ScriptEntry, Tier, WorldScript};
use crate::difficulty::Difficulty;
use crate::policy::TOPIC_BUCKETS;
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_questions: usize,
    pub easy_frac: f64,
    pub medium_frac: f64,
    /// Success odds of a capable tier reading the right evidence.
    pub pair_success: f64,
    /// Direct-inference odds of a capable tier.
    pub direct_success: f64,
    /// Direct-inference odds of a tier below the question's level.
    pub direct_miss: f64,
    pub failure_mode: FailureMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_questions: 200,
            easy_frac: 0.6,
            medium_frac: 0.25,
            pair_success: 0.95,
            direct_success: 0.95,
            direct_miss: 0.1,
            failure_mode: FailureMode::Distractor,
            seed: 0,
        }
    }
}

const TOPIC_NAMES: [&str; TOPIC_BUCKETS] = ["history", "science", "sports", "geography", "film"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub dataset: Vec<QuestionRecord>,
    pub script: WorldScript,
    /// Intended level of each question.
    pub levels: BTreeMap<String, Difficulty>,
}

fn hops(level: Difficulty) -> usize {
    match level {
        Difficulty::Easy => 1,
        Difficulty::Medium => 2,
        Difficulty::Hard => 3,
    }
}

fn capable(level: Difficulty, tier: Tier) -> bool {
    tier >= level.tier()
}

pub fn synth_world(registry: &BackendRegistry, cfg: &SynthConfig) -> SynthWorld {
    let n = cfg.n_questions;
    let n_easy = (n as f64 * cfg.easy_frac).round() as usize;
    let n_medium = ((n as f64 * cfg.medium_frac).round() as usize).min(n - n_easy.min(n));
    let mut levels: Vec<Difficulty> = std::iter::repeat_n(Difficulty::Easy, n_easy.min(n))
        .chain(std::iter::repeat_n(Difficulty::Medium, n_medium))
        .collect();
    levels.resize(n, Difficulty::Hard);
    let mut rng = rng_for(cfg.seed, &["synth"]);
    levels.shuffle(&mut rng);

    let graphrags = registry.graphrag_ids();
    let mut dataset = Vec::with_capacity(n);
    let mut questions = BTreeMap::new();
    let mut level_map = BTreeMap::new();
    for (i, &level) in levels.iter().enumerate() {
        let id = format!("syn-{i:04}");
        let topic = rng.gen_range(0..TOPIC_BUCKETS);
        let h = hops(level);
        let question = format!(
            "In the {} collection, which entity does record {i} reach after {h} linked fact{}?",
            TOPIC_NAMES[topic],
            if h == 1 { "" } else { "s" }
        );
        let answer = format!("entity {i}");
        let home = &graphrags[topic % graphrags.len()];
        let answerable_by = Tier::ALL
            .iter()
            .filter(|&&t| capable(level, t))
            .map(|&t| PairOdds { graphrag: home.clone(), tier: t, p: cfg.pair_success })
            .collect();
        let direct = Tier::ALL
            .iter()
            .map(|&t| (t, if capable(level, t) { cfg.direct_success } else { cfg.direct_miss }))
            .collect();
        questions.insert(
            id.clone(),
            ScriptEntry {
                answer: answer.clone(),
                evidence: format!("Record {i} in the {} collection resolves to {answer}.", TOPIC_NAMES[topic]),
                wrong_answer: format!("entity {}", i + n),
                answerable_by,
                direct,
                distractor: None,
            },
        );
        level_map.insert(id.clone(), level);
        dataset.push(QuestionRecord {
            id,
            question,
            golden_answers: vec![answer],
            source: "synthetic".to_string(),
            attributes: Some(QuestionAttributes { topic, hops: h }),
        });
    }
    SynthWorld { dataset, script: WorldScript { failure_mode: cfg.failure_mode, questions }, levels: level_map }
}
