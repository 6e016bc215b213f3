//! Batch evaluation and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode, Episode, ScoreContext};
use super::router::Router;
use super::{HarnessError, QuestionRecord};
use crate::backends::{Backend, BackendRegistry, Tier};
use crate::exec::{self, ExecMode};
use crate::protocol::DEFAULT_MAX_TURNS;
use crate::reward::{RewardConfig, Stage};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub seed: u64,
    pub max_turns: usize,
    pub exec: ExecMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { seed: 0, max_turns: DEFAULT_MAX_TURNS, exec: ExecMode::Parallel }
    }
}

/// Fraction of executed generator calls per tier; `None` when no call ran.
pub fn tier_shares<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Option<BTreeMap<Tier, f64>> {
    let mut counts: BTreeMap<Tier, usize> = Tier::ALL.iter().map(|&t| (t, 0)).collect();
    for e in episodes {
        for t in &e.invoked_tiers {
            *counts.entry(*t).or_default() += 1;
        }
    }
    let total: usize = counts.values().sum();
    (total > 0).then(|| counts.into_iter().map(|(t, c)| (t, c as f64 / total as f64)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
    /// `None` when the slice executed no generator call.
    pub routing_share: Option<BTreeMap<Tier, f64>>,
    pub avg_valid_calls: f64,
}

impl SliceReport {
    fn from_episodes(episodes: &[&Episode]) -> Self {
        let n = episodes.len();
        let mean = |f: &dyn Fn(&Episode) -> f64| if n == 0 { 0.0 } else { episodes.iter().map(|e| f(e)).sum::<f64>() / n as f64 };
        SliceReport {
            count: n,
            em: mean(&|e| e.em),
            f1: mean(&|e| e.f1),
            routing_share: tier_shares(episodes.iter().copied()),
            avg_valid_calls: mean(&|e| e.actions.len() as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: SliceReport,
    pub per_source: BTreeMap<String, SliceReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub metric: String,
    pub value: Option<f64>,
    pub slice: String,
}

impl EvalReport {
    pub fn from_episodes(episodes: &[Episode]) -> Self {
        let all: Vec<&Episode> = episodes.iter().collect();
        let mut by_source: BTreeMap<String, Vec<&Episode>> = BTreeMap::new();
        for e in episodes {
            let key = if e.source.is_empty() { "default".to_string() } else { e.source.clone() };
            by_source.entry(key).or_default().push(e);
        }
        EvalReport {
            overall: SliceReport::from_episodes(&all),
            per_source: by_source.into_iter().map(|(k, v)| (k, SliceReport::from_episodes(&v))).collect(),
        }
    }

    pub fn em(&self) -> f64 {
        self.overall.em
    }

    /// Share of calls on one tier; 0 when no call ran.
    pub fn share(&self, tier: Tier) -> f64 {
        self.overall.routing_share.as_ref().and_then(|s| s.get(&tier).copied()).unwrap_or(0.0)
    }

    /// Flat records: the stable machine-readable form.
    pub fn records(&self) -> Vec<ReportRecord> {
        let mut out = Vec::new();
        let mut push_slice = |slice: &str, s: &SliceReport| {
            let mut rec = |metric: &str, value: Option<f64>| {
                out.push(ReportRecord { metric: metric.to_string(), value, slice: slice.to_string() })
            };
            rec("count", Some(s.count as f64));
            rec("em", Some(s.em));
            rec("f1", Some(s.f1));
            rec("avg_valid_calls", Some(s.avg_valid_calls));
            for t in Tier::ALL {
                let v = s.routing_share.as_ref().map(|m| m.get(&t).copied().unwrap_or(0.0));
                rec(&format!("routing_share.{}", t.as_str()), v);
            }
        };
        push_slice("all", &self.overall);
        for (src, s) in &self.per_source {
            push_slice(src, s);
        }
        out
    }

    pub fn to_jsonl(&self) -> String {
        self.records().iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<(), HarnessError> {
        std::fs::write(path, self.to_jsonl()).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<16} {:>6} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}", "slice", "n", "EM", "F1", "calls", "small", "medium", "large");
        let mut row = |name: &str, r: &SliceReport| {
            let share = |t: Tier| match &r.routing_share {
                Some(m) => format!("{:.3}", m.get(&t).copied().unwrap_or(0.0)),
                None => "-".to_string(),
            };
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>7.4} {:>7.4} {:>7.3} {:>7} {:>7} {:>7}",
                name,
                r.count,
                r.em,
                r.f1,
                r.avg_valid_calls,
                share(Tier::Small),
                share(Tier::Medium),
                share(Tier::Large)
            );
        };
        row("all", &self.overall);
        for (src, r) in &self.per_source {
            row(src, r);
        }
        s
    }
}

/// Runs one episode per question; per-question randomness comes from the seed.
pub fn run_all(
    router: &dyn Router,
    dataset: &[QuestionRecord],
    features: &[Vec<f64>],
    registry: &BackendRegistry,
    world: &dyn Backend,
    cfg: &EvalConfig,
) -> Result<Vec<Episode>, HarnessError> {
    if dataset.len() != features.len() {
        return Err(HarnessError::Config("dataset and feature lists differ in length".into()));
    }
    let reward = RewardConfig::default();
    let score = ScoreContext { stage: Stage::Stage1, profile: None, reward: &reward };
    exec::map_indexed(cfg.exec, dataset, |i, q| {
        let mut rng = rng_for(cfg.seed, &["eval", &q.id]);
        run_episode(router, registry, world, q, &features[i], cfg.max_turns, score, &mut rng)
    })
    .into_iter()
    .collect()
}

pub fn evaluate(
    router: &dyn Router,
    dataset: &[QuestionRecord],
    features: &[Vec<f64>],
    registry: &BackendRegistry,
    world: &dyn Backend,
    cfg: &EvalConfig,
) -> Result<EvalReport, HarnessError> {
    Ok(EvalReport::from_episodes(&run_all(router, dataset, features, registry, world, cfg)?))
}
