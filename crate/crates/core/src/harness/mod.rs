//! Operational shell: datasets, episodes, evaluation and reports.

mod config;
mod dataset;
mod episode;
mod eval;
mod router;
mod synth;

use thiserror::Error;

pub use config::{AppConfig, Paths, TrainSection};
pub use dataset::{load_dataset, parse_dataset, subsample, QuestionAttributes, QuestionRecord};
pub use episode::{run_episode, Episode, ScoreContext};
pub use eval::{evaluate, run_all, tier_shares, EvalConfig, EvalReport, ReportRecord, SliceReport};
pub use router::{
    sanitize_query, templated_output, ForcedRouter, OracleRouter, PolicyRouter, Router, ScriptedRouter, TurnContext,
    UniformRouter, FALLBACK_ANSWER,
};
pub use synth::{synth_world, SynthConfig, SynthWorld};

use crate::protocol::ProtocolError;
use crate::reward::RewardError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("malformed record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("io: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Features for every record, in order.
pub fn featurize_all(dataset: &[QuestionRecord]) -> Vec<Vec<f64>> {
    dataset.iter().map(crate::policy::featurize).collect()
}
