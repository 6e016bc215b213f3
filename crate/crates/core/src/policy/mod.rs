//! Router policy: features, staged softmax, cloning and RL training.

mod features;
mod model;
mod train;

use thiserror::Error;

pub use features::{
    featurize, turn_features, ATTEMPT_BUCKETS, ATTEMPT_OFFSET, FEATURE_DIM, HOP_BUCKETS, HOP_OFFSET, TEXT_BUCKETS, TEXT_OFFSET,
    TOPIC_BUCKETS, TOPIC_OFFSET,
};
pub use model::{ActionDistribution, Architecture, PolicySnapshot, SampledAction};
pub use train::{
    checkpoint_path, clone_from_traces, group_advantages, objective_gradient, train_stage, train_two_stage, update_step,
    Checkpoint, CloneConfig, CloneExample, CloneReport, RolloutGroup, StepStats, TrainConfig, TrainEnv, TrainLogRecord,
    TwoStageResult, DEFAULT_STD_FLOOR,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("candidate pool is empty")]
    EmptyPool,
    #[error("no valid traces to clone from ({skipped} skipped)")]
    NoValidTraces { skipped: usize },
    #[error("group of {0} rollouts is too small; need at least 2")]
    GroupTooSmall(usize),
    #[error("no rollout groups in the batch")]
    EmptyBatch,
    #[error("gradient is not finite")]
    NonFiniteGradient,
    #[error("no difficulty profile for question {0}")]
    MissingProfile(String),
    #[error("policy pools do not match: {0}")]
    PoolMismatch(String),
    #[error("rollout failed: {0}")]
    Rollout(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}
