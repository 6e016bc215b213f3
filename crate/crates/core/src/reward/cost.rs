//! Difficulty-weighted penalty for invoking a larger generator than needed.

use serde::{Deserialize, Serialize};

use crate::difficulty::{Difficulty, DifficultyProfile};

use super::RewardError;

/// How one cost figure is drawn from an episode that called several generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostAttribution {
    #[default]
    Max,
    Sum,
    Last,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostConfig {
    pub cost_scale: f64,
    pub easy_weight: f64,
    pub medium_weight: f64,
    pub hard_weight: f64,
    pub attribution: CostAttribution,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { cost_scale: 0.05, easy_weight: 1.0, medium_weight: 0.6, hard_weight: 0.2, attribution: CostAttribution::Max }
    }
}

impl CostConfig {
    pub fn weight(&self, difficulty: Difficulty) -> f64 {
        match difficulty {
            Difficulty::Easy => self.easy_weight,
            Difficulty::Medium => self.medium_weight,
            Difficulty::Hard => self.hard_weight,
        }
    }
}

/// Collapses the costs of invoked generators, in call order, to one figure.
/// No calls means no cost.
pub fn attribute_cost(invoked: &[u32], attribution: CostAttribution) -> u32 {
    match attribution {
        CostAttribution::Max => invoked.iter().copied().max().unwrap_or(0),
        CostAttribution::Sum => invoked.iter().sum(),
        CostAttribution::Last => invoked.last().copied().unwrap_or(0),
    }
}

/// `cost_scale * weight(difficulty) * max(0, invoked - c_min)`.
pub fn cost_reward(invoked_cost: u32, profile: Option<&DifficultyProfile>, cfg: &CostConfig) -> Result<f64, RewardError> {
    let profile = profile.ok_or(RewardError::MissingProfile(None))?;
    let excess = f64::from(invoked_cost.saturating_sub(profile.c_min));
    Ok(cfg.cost_scale * cfg.weight(profile.difficulty) * excess)
}
