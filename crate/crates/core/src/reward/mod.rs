//! Episode scoring: format penalty, answer outcome, cost penalty, and the
//! stage-dependent combination of the three.

mod cost;
mod format;
mod outcome;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::BackendRegistry;
use crate::difficulty::DifficultyProfile;
use crate::protocol::Trajectory;

pub use cost::{attribute_cost, cost_reward, CostAttribution, CostConfig};
pub use format::{format_reward, is_placeholder_reasoning, FormatRule, FormatScore, RuleHit, MISSING_GRAPHRAG_ESCALATED_TENTHS};
pub use outcome::{exact_match, f1_score, normalize_answer};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewardError {
    #[error("no difficulty profile for question {}", .0.as_deref().unwrap_or("<unknown>"))]
    MissingProfile(Option<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Stage1,
    Stage2,
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "stage1" => Ok(Stage::Stage1),
            "2" | "stage2" => Ok(Stage::Stage2),
            _ => Err(format!("unknown stage '{s}' (expected 1 or 2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMetric {
    #[default]
    Em,
    F1,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardConfig {
    pub cost: CostConfig,
    pub outcome: OutcomeMetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    /// In [-1, 0].
    pub format: f64,
    pub fired_rules: Vec<FormatRule>,
    pub outcome: f64,
    /// Non-negative; how much of it reaches `total` depends on the stage.
    pub cost: f64,
    pub total: f64,
    pub stage: Stage,
}

/// Stage 1 ignores cost. Stage 2 subtracts it only from correct episodes.
pub fn shape(format: f64, outcome: f64, cost: f64, stage: Stage) -> f64 {
    match stage {
        Stage::Stage1 => format + outcome,
        Stage::Stage2 => format + outcome - if outcome == 1.0 { cost } else { 0.0 },
    }
}

/// Scores one finished episode. The profile is only consulted at stage 2.
pub fn score_episode(
    trajectory: &Trajectory,
    golds: &[String],
    invoked_costs: &[u32],
    profile: Option<&DifficultyProfile>,
    registry: &BackendRegistry,
    stage: Stage,
    cfg: &RewardConfig,
) -> Result<RewardBreakdown, RewardError> {
    let fmt = format_reward(trajectory, registry);
    let answer = trajectory.final_answer();
    let outcome = match cfg.outcome {
        OutcomeMetric::Em => exact_match(answer, golds),
        OutcomeMetric::F1 => f1_score(answer, golds),
    };
    let cost = match stage {
        Stage::Stage1 => 0.0,
        Stage::Stage2 => {
            let invoked = attribute_cost(invoked_costs, cfg.cost.attribution);
            cost_reward(invoked, profile, &cfg.cost)?
        }
    };
    // Subtracting from +0 keeps a clean trajectory at +0 rather than -0.
    let format = 0.0 - fmt.penalty;
    Ok(RewardBreakdown { format, fired_rules: fmt.rules(), outcome, cost, total: shape(format, outcome, cost, stage), stage })
}
