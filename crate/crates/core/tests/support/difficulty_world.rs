//! Sixty-question scripted world with hand-written direct-answer tables, and
//! a profile oracle that enumerates every (model, trial) outcome.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;

use tierroute_core::backends::{BackendRegistry, FailureMode, ScriptEntry, SimWorld, Tier, WorldScript};
use tierroute_core::difficulty::{trial_rng, Difficulty};
use tierroute_core::harness::QuestionRecord;

/// Direct success probability per tier (small, medium, large).
const TABLE: [[f64; 3]; 12] = [
    [1.0, 1.0, 1.0],
    [0.0, 1.0, 1.0],
    [0.0, 0.0, 1.0],
    [0.0, 0.0, 0.0],
    [0.8, 1.0, 1.0],
    [0.5, 0.8, 1.0],
    [0.5, 0.5, 0.8],
    [0.5, 0.5, 0.5],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.8, 0.8, 0.8],
    [0.9, 0.3, 0.95],
];

pub fn questions() -> Vec<QuestionRecord> {
    (0..60).map(|i| QuestionRecord::new(&format!("d{i:02}"), &format!("difficulty question {i}"), &[&format!("answer {i}")])).collect()
}

pub fn world(registry: &BackendRegistry) -> SimWorld {
    let questions = (0..60)
        .map(|i| {
            let row = TABLE[i % TABLE.len()];
            let entry = ScriptEntry {
                answer: format!("answer {i}"),
                evidence: format!("evidence {i}"),
                wrong_answer: "something else".into(),
                answerable_by: Vec::new(),
                direct: Tier::ALL.iter().zip(row).map(|(&t, p)| (t, p)).collect(),
                distractor: None,
            };
            (format!("d{i:02}"), entry)
        })
        .collect();
    SimWorld::new(WorldScript { failure_mode: FailureMode::Distractor, questions }, registry.clone()).unwrap()
}

pub struct ExpectedProfile {
    pub sr: BTreeMap<String, f64>,
    pub difficulty: Difficulty,
    pub c_min: u32,
}

/// Enumerates each model's `n` trials: the world draws one uniform per call
/// and succeeds when it falls below the tier's probability.
pub fn enumerate_profile(
    q: &QuestionRecord,
    world: &SimWorld,
    registry: &BackendRegistry,
    seed: u64,
    n: u32,
    tau: f64,
) -> ExpectedProfile {
    let entry = &world.script().questions[&q.id];
    let mut sr = BTreeMap::new();
    for m in &registry.llms {
        let p = entry.direct.get(&m.tier).copied().unwrap_or(0.0);
        let hits = (0..n).filter(|&t| trial_rng(seed, &q.id, &m.id, t).gen::<f64>() < p).count();
        sr.insert(m.id.clone(), hits as f64 / f64::from(n));
    }
    let passes = |tier: Tier| registry.llms.iter().any(|m| m.tier == tier && sr[&m.id] >= tau);
    let difficulty = if passes(Tier::Small) {
        Difficulty::Easy
    } else if passes(Tier::Medium) {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    };
    let mut c_min = u32::MAX;
    for m in &registry.llms {
        if sr[&m.id] >= tau && m.cost() < c_min {
            c_min = m.cost();
        }
    }
    if c_min == u32::MAX {
        c_min = registry.llms.iter().map(|m| m.cost()).max().unwrap();
    }
    ExpectedProfile { sr, difficulty, c_min }
}
