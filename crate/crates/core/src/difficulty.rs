//! Question difficulty from repeated direct-inference trials.
//!
//! Every model answers the bare question `n_trials` times. A model passes
//! when its success rate reaches the threshold. The difficulty label names
//! the smallest tier with a passing member, and `c_min` is the cheapest
//! passing model's cost.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{Backend, BackendError, LlmSpec, Prompt, Query, Tier};
use crate::exec::{self, ExecMode};
use crate::harness::QuestionRecord;
use crate::reward::exact_match;
use crate::seed::rng_for;

pub const DEFAULT_TAU: f64 = 0.8;
pub const DEFAULT_TRIALS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn tier(self) -> Tier {
        match self {
            Difficulty::Easy => Tier::Small,
            Difficulty::Medium => Tier::Medium,
            Difficulty::Hard => Tier::Large,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyProfile {
    pub question_id: String,
    pub trials: u32,
    pub successes: BTreeMap<String, u32>,
    pub sr: BTreeMap<String, f64>,
    pub difficulty: Difficulty,
    pub c_min: u32,
}

impl DifficultyProfile {
    /// A Hard profile with no trial data.
    pub fn empty(question_id: &str, trials: u32) -> Self {
        DifficultyProfile {
            question_id: question_id.to_string(),
            trials,
            successes: BTreeMap::new(),
            sr: BTreeMap::new(),
            difficulty: Difficulty::Hard,
            c_min: Tier::Large.default_cost(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DifficultyError {
    #[error("model pool is empty")]
    EmptyModelPool,
    #[error("invalid profiling parameters: {0}")]
    InvalidParams(String),
    #[error("duplicate question id '{0}'")]
    DuplicateQuestionId(String),
    #[error("profiling failed for {} question(s): {}", failed.len(), failed.iter().map(|(q, _)| q.as_str()).collect::<Vec<_>>().join(", "))]
    PartialProfileSet { profiles: Vec<DifficultyProfile>, failed: Vec<(String, String)> },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("profile store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileConfig {
    pub n_trials: u32,
    pub tau: f64,
    pub seed: u64,
    pub exec: ExecMode,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        ProfileConfig { n_trials: DEFAULT_TRIALS, tau: DEFAULT_TAU, seed: 0, exec: ExecMode::Parallel }
    }
}

/// Labels a question from per-model success counts.
pub fn classify(
    question_id: &str,
    successes: BTreeMap<String, u32>,
    models: &[LlmSpec],
    n_trials: u32,
    tau: f64,
) -> DifficultyProfile {
    let sr: BTreeMap<String, f64> = successes.iter().map(|(m, &s)| (m.clone(), f64::from(s) / f64::from(n_trials))).collect();
    let passing: Vec<&LlmSpec> = models.iter().filter(|m| sr.get(&m.id).is_some_and(|&r| r >= tau)).collect();
    let difficulty = if passing.iter().any(|m| m.tier == Tier::Small) {
        Difficulty::Easy
    } else if passing.iter().any(|m| m.tier == Tier::Medium) {
        Difficulty::Medium
    } else {
        Difficulty::Hard
    };
    let c_min = passing
        .iter()
        .map(|m| m.cost())
        .min()
        .unwrap_or_else(|| models.iter().map(LlmSpec::cost).max().unwrap_or(Tier::Large.default_cost()));
    DifficultyProfile { question_id: question_id.to_string(), trials: n_trials, successes, sr, difficulty, c_min }
}

/// Seed stream for one direct-inference trial.
pub fn trial_rng(seed: u64, question_id: &str, model_id: &str, trial: u32) -> rand_chacha::ChaCha8Rng {
    rng_for(seed, &["profile", question_id, model_id, &trial.to_string()])
}

pub fn profile_question(
    q: &QuestionRecord,
    models: &[LlmSpec],
    world: &dyn Backend,
    cfg: &ProfileConfig,
) -> Result<DifficultyProfile, DifficultyError> {
    if models.is_empty() {
        return Err(DifficultyError::EmptyModelPool);
    }
    if cfg.n_trials == 0 || !(cfg.tau > 0.0 && cfg.tau <= 1.0) {
        return Err(DifficultyError::InvalidParams(format!("n_trials={} tau={}", cfg.n_trials, cfg.tau)));
    }
    let query = Query { question_id: &q.id, text: &q.question };
    let mut successes = BTreeMap::new();
    for m in models {
        let mut hits = 0;
        for t in 0..cfg.n_trials {
            let mut rng = trial_rng(cfg.seed, &q.id, &m.id, t);
            let out = world.generate(&m.id, Prompt { query, evidence: None }, &mut rng)?;
            if exact_match(Some(&out.text), &q.golden_answers) == 1.0 {
                hits += 1;
            }
        }
        successes.insert(m.id.clone(), hits);
    }
    Ok(classify(&q.id, successes, models, cfg.n_trials, cfg.tau))
}

/// Profiles every question, fanning out across questions.
pub fn profile_dataset(
    ds: &[QuestionRecord],
    models: &[LlmSpec],
    world: &dyn Backend,
    cfg: &ProfileConfig,
) -> Result<Vec<DifficultyProfile>, DifficultyError> {
    let mut seen = BTreeSet::new();
    for q in ds {
        if !seen.insert(q.id.as_str()) {
            return Err(DifficultyError::DuplicateQuestionId(q.id.clone()));
        }
    }
    if ds.is_empty() {
        return Ok(Vec::new());
    }
    if models.is_empty() {
        return Err(DifficultyError::EmptyModelPool);
    }
    let results = exec::map(cfg.exec, ds, |q| profile_question(q, models, world, cfg));
    let mut profiles = Vec::with_capacity(ds.len());
    let mut failed = Vec::new();
    for (q, r) in ds.iter().zip(results) {
        match r {
            Ok(p) => profiles.push(p),
            Err(e) => failed.push((q.id.clone(), e.to_string())),
        }
    }
    if failed.is_empty() {
        Ok(profiles)
    } else {
        Err(DifficultyError::PartialProfileSet { profiles, failed })
    }
}

/// Line-delimited profile store. Appends never rewrite earlier lines; on
/// load the last record for a question wins.
pub struct ProfileStore;

impl ProfileStore {
    pub fn append(path: &Path, profiles: &[DifficultyProfile]) -> Result<(), DifficultyError> {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DifficultyError::Store(format!("{}: {e}", path.display())))?;
        let mut w = std::io::BufWriter::new(file);
        for p in profiles {
            let line = serde_json::to_string(p).expect("profile serializes");
            writeln!(w, "{line}").map_err(|e| DifficultyError::Store(e.to_string()))?;
        }
        w.flush().map_err(|e| DifficultyError::Store(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<BTreeMap<String, DifficultyProfile>, DifficultyError> {
        let file = std::fs::File::open(path).map_err(|e| DifficultyError::Store(format!("{}: {e}", path.display())))?;
        let mut out = BTreeMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| DifficultyError::Store(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let p: DifficultyProfile =
                serde_json::from_str(&line).map_err(|e| DifficultyError::Store(format!("line {}: {e}", n + 1)))?;
            out.insert(p.question_id.clone(), p);
        }
        Ok(out)
    }
}
