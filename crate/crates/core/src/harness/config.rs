//! Single TOML document configuring every module.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{EvalConfig, HarnessError, SynthConfig};
use crate::backends::HttpConfig;
use crate::difficulty::ProfileConfig;
use crate::policy::{CloneConfig, TrainConfig};
use crate::reward::RewardConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub registry: Option<PathBuf>,
    pub world: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub traces: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { stage1: TrainConfig::default(), stage2: TrainConfig::stage2() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub paths: Paths,
    pub reward: RewardConfig,
    pub profile: ProfileConfig,
    pub clone: CloneConfig,
    pub train: TrainSection,
    pub eval: EvalConfig,
    pub http: HttpConfig,
    pub synth: SynthConfig,
}

impl AppConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            let p = &mut cfg.paths;
            for slot in [&mut p.registry, &mut p.world, &mut p.dataset, &mut p.profiles, &mut p.traces, &mut p.checkpoints] {
                if let Some(rel) = slot.as_ref().filter(|r| r.is_relative()) {
                    *slot = Some(base.join(rel));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Applies one seed to every seeded section.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.profile.seed = seed;
        self.train.stage1.seed = seed;
        self.train.stage2.seed = seed;
        self.eval.seed = seed;
        self.synth.seed = seed;
        self
    }
}
