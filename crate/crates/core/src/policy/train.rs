//! Behavior cloning and the two-stage group-relative policy-gradient trainer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use tracing::{debug, info};

use super::features::{turn_features, FEATURE_DIM};
use super::model::{Architecture, PolicySnapshot};
use super::PolicyError;
use crate::backends::{Backend, BackendRegistry, Tier};
use crate::difficulty::DifficultyProfile;
use crate::exec::{self, ExecMode};
use crate::harness::{run_episode, tier_shares, Episode, PolicyRouter, QuestionRecord, ScoreContext};
use crate::protocol::{parse_trajectory, DEFAULT_MAX_TURNS};
use crate::reward::{format_reward, RewardConfig, Stage};
use crate::seed::rng_for;

pub const DEFAULT_STD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage: Stage,
    pub group_size: usize,
    pub kl_coeff: f64,
    pub learning_rate: f64,
    pub max_steps: usize,
    pub std_floor: f64,
    pub seed: u64,
    pub temperature: f64,
    /// Questions per step.
    pub batch_size: usize,
    pub max_turns: usize,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: usize,
    pub exec: ExecMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage: Stage::Stage1,
            group_size: 5,
            kl_coeff: 0.001,
            learning_rate: 0.5,
            max_steps: 80,
            std_floor: DEFAULT_STD_FLOOR,
            seed: 0,
            temperature: 1.0,
            batch_size: 16,
            max_turns: DEFAULT_MAX_TURNS,
            checkpoint_every: 0,
            exec: ExecMode::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn stage2() -> Self {
        TrainConfig { stage: Stage::Stage2, max_steps: 40, temperature: 1.5, learning_rate: 0.35, batch_size: 32, ..TrainConfig::default() }
    }
}

/// `(r_i - mean) / max(std, floor)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], std_floor: f64) -> Result<Vec<f64>, PolicyError> {
    if rewards.len() < 2 {
        return Err(PolicyError::GroupTooSmall(rewards.len()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let std = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
    let denom = std.max(std_floor);
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Rollouts of one question sharing a baseline.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub question_id: String,
    pub features: Vec<f64>,
    pub episodes: Vec<Episode>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
}

impl RolloutGroup {
    pub fn new(question_id: String, features: Vec<f64>, episodes: Vec<Episode>, std_floor: f64) -> Result<Self, PolicyError> {
        let rewards: Vec<f64> = episodes.iter().map(|e| e.reward.total).collect();
        let advantages = group_advantages(&rewards, std_floor)?;
        Ok(RolloutGroup { question_id, features, episodes, rewards, advantages })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub grad_norm: f64,
}

/// Gradient of the sampled objective: mean over episodes of advantage times
/// the summed log-probability of its actions, minus `kl_coeff` times the
/// mean KL over the groups' questions.
pub fn objective_gradient(policy: &PolicySnapshot, groups: &[RolloutGroup], cfg: &TrainConfig) -> Result<Vec<f64>, PolicyError> {
    let n_episodes: usize = groups.iter().map(|g| g.episodes.len()).sum();
    let mut grad = vec![0.0; policy.params.len()];
    if n_episodes == 0 {
        return Ok(grad);
    }
    for group in groups {
        for (episode, &adv) in group.episodes.iter().zip(&group.advantages) {
            if adv == 0.0 {
                continue;
            }
            for (turn, action) in episode.actions.iter().enumerate() {
                let (Some(g), Some(l)) = (policy.graphrag_index(&action.graphrag_id), policy.llm_index(&action.llm_id)) else {
                    return Err(PolicyError::PoolMismatch(format!(
                        "action {}/{} is not in the policy's pools",
                        action.graphrag_id, action.llm_id
                    )));
                };
                let previous = turn.checked_sub(1).map(|p| episode.invoked_tiers[p]);
                let x = turn_features(&group.features, previous);
                policy.add_log_prob_grad(&x, g, l, cfg.temperature, adv / n_episodes as f64, &mut grad);
            }
        }
        if cfg.kl_coeff != 0.0 {
            policy.add_kl_grad(&group.features, cfg.temperature, -cfg.kl_coeff / groups.len() as f64, &mut grad);
        }
    }
    Ok(grad)
}

/// One ascent step on the objective.
pub fn update_step(policy: &PolicySnapshot, groups: &[RolloutGroup], cfg: &TrainConfig) -> Result<(PolicySnapshot, StepStats), PolicyError> {
    if groups.is_empty() {
        return Err(PolicyError::EmptyBatch);
    }
    let grad = objective_gradient(policy, groups, cfg)?;
    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !grad_norm.is_finite() {
        return Err(PolicyError::NonFiniteGradient);
    }
    let mut next = policy.clone();
    next.params.iter_mut().zip(&grad).for_each(|(p, g)| *p += cfg.learning_rate * g);
    let n: usize = groups.iter().map(|g| g.rewards.len()).sum();
    let mean_reward = groups.iter().flat_map(|g| &g.rewards).sum::<f64>() / n.max(1) as f64;
    let mean_kl = groups.iter().map(|g| policy.kl(&g.features, cfg.temperature)).sum::<f64>() / groups.len() as f64;
    Ok((next, StepStats { mean_reward, mean_kl, grad_norm }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub stage: Stage,
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub grad_norm: f64,
    pub em: f64,
    /// Share of executed generator calls per tier in this step's rollouts.
    pub tier_share: BTreeMap<Tier, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub policy: PolicySnapshot,
    pub registry_fingerprint: String,
    pub stage: Stage,
    pub step: usize,
    pub seed: u64,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let text = std::fs::read_to_string(path).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| PolicyError::Io(format!("{}: {e}", path.display())))
    }
}

/// Everything a training stage needs besides its config.
pub struct TrainEnv<'a> {
    pub dataset: &'a [QuestionRecord],
    pub features: &'a [Vec<f64>],
    pub profiles: &'a BTreeMap<String, DifficultyProfile>,
    pub world: &'a dyn Backend,
    pub registry: &'a BackendRegistry,
    pub reward: &'a RewardConfig,
    pub checkpoint_dir: Option<&'a Path>,
}

fn stage_tag(stage: Stage) -> &'static str {
    match stage {
        Stage::Stage1 => "stage1",
        Stage::Stage2 => "stage2",
    }
}

/// Runs one stage from `policy`; the reference is reset on entry.
pub fn train_stage(
    policy: &PolicySnapshot,
    env: &TrainEnv<'_>,
    cfg: &TrainConfig,
    log: &mut Vec<TrainLogRecord>,
) -> Result<PolicySnapshot, PolicyError> {
    policy.check_registry(env.registry)?;
    if env.dataset.len() != env.features.len() {
        return Err(PolicyError::Config("dataset and feature lists differ in length".into()));
    }
    if cfg.stage == Stage::Stage2 {
        if let Some(q) = env.dataset.iter().find(|q| !env.profiles.contains_key(&q.id)) {
            return Err(PolicyError::MissingProfile(q.id.clone()));
        }
    }
    let mut policy = policy.clone();
    if cfg.max_steps == 0 || env.dataset.is_empty() {
        return Ok(policy);
    }
    if cfg.group_size < 2 {
        return Err(PolicyError::GroupTooSmall(cfg.group_size));
    }
    policy.reset_reference();
    let tag = stage_tag(cfg.stage);
    let batch = cfg.batch_size.clamp(1, env.dataset.len());

    for step in 0..cfg.max_steps {
        let mut order: Vec<usize> = (0..env.dataset.len()).collect();
        order.shuffle(&mut rng_for(cfg.seed, &["batch", tag, &step.to_string()]));
        let jobs: Vec<(usize, usize)> =
            order[..batch].iter().flat_map(|&qi| (0..cfg.group_size).map(move |m| (qi, m))).collect();

        let router = PolicyRouter { policy: &policy, temperature: cfg.temperature };
        let results = exec::map(cfg.exec, &jobs, |&(qi, member)| {
            let q = &env.dataset[qi];
            let mut rng = rng_for(cfg.seed, &["rollout", tag, &step.to_string(), &q.id, &member.to_string()]);
            let score = ScoreContext { stage: cfg.stage, profile: env.profiles.get(&q.id), reward: env.reward };
            run_episode(&router, env.registry, env.world, q, &env.features[qi], cfg.max_turns, score, &mut rng)
        });
        let mut episodes = Vec::with_capacity(results.len());
        for r in results {
            episodes.push(r.map_err(|e| PolicyError::Rollout(e.to_string()))?);
        }

        let mut groups = Vec::with_capacity(batch);
        for (i, chunk) in episodes.chunks(cfg.group_size).enumerate() {
            let qi = jobs[i * cfg.group_size].0;
            groups.push(RolloutGroup::new(env.dataset[qi].id.clone(), env.features[qi].clone(), chunk.to_vec(), cfg.std_floor)?);
        }

        let (next, stats) = update_step(&policy, &groups, cfg)?;
        policy = next;
        let all: Vec<&Episode> = groups.iter().flat_map(|g| &g.episodes).collect();
        let em = all.iter().map(|e| e.em).sum::<f64>() / all.len() as f64;
        let record = TrainLogRecord {
            stage: cfg.stage,
            step,
            mean_reward: stats.mean_reward,
            mean_kl: stats.mean_kl,
            grad_norm: stats.grad_norm,
            em,
            tier_share: tier_shares(all.iter().copied()).unwrap_or_default(),
        };
        debug!(stage = tag, step, reward = record.mean_reward, em, kl = record.mean_kl, "train step");
        log.push(record);

        if let Some(dir) = env.checkpoint_dir {
            if cfg.checkpoint_every > 0 && ((step + 1) % cfg.checkpoint_every == 0 || step + 1 == cfg.max_steps) {
                let ck = Checkpoint {
                    policy: policy.clone(),
                    registry_fingerprint: env.registry.fingerprint(),
                    stage: cfg.stage,
                    step: step + 1,
                    seed: cfg.seed,
                };
                ck.save(&checkpoint_path(dir, cfg.stage, step + 1))?;
            }
        }
    }
    info!(stage = tag, steps = cfg.max_steps, "stage finished");
    Ok(policy)
}

pub fn checkpoint_path(dir: &Path, stage: Stage, step: usize) -> PathBuf {
    dir.join(format!("{}-step{:04}.json", stage_tag(stage), step))
}

#[derive(Debug, Clone)]
pub struct TwoStageResult {
    pub stage1: PolicySnapshot,
    pub stage2: PolicySnapshot,
    pub log: Vec<TrainLogRecord>,
}

/// Stage 1 on format and outcome, then stage 2 with the cost term.
/// Profiles must cover the dataset before anything runs.
pub fn train_two_stage(
    policy: &PolicySnapshot,
    env: &TrainEnv<'_>,
    cfg1: &TrainConfig,
    cfg2: &TrainConfig,
) -> Result<TwoStageResult, PolicyError> {
    if let Some(q) = env.dataset.iter().find(|q| !env.profiles.contains_key(&q.id)) {
        return Err(PolicyError::MissingProfile(q.id.clone()));
    }
    let mut log = Vec::new();
    let cfg1 = TrainConfig { stage: Stage::Stage1, ..cfg1.clone() };
    let cfg2 = TrainConfig { stage: Stage::Stage2, ..cfg2.clone() };
    let stage1 = train_stage(policy, env, &cfg1, &mut log)?;
    let stage2 = train_stage(&stage1, env, &cfg2, &mut log)?;
    Ok(TwoStageResult { stage1, stage2, log })
}

/// One cloning example: question features and a trace text.
#[derive(Debug, Clone)]
pub struct CloneExample {
    pub features: Vec<f64>,
    pub trace: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloneConfig {
    pub arch: Architecture,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        CloneConfig { arch: Architecture::Hierarchical, epochs: 60, learning_rate: 1.0, l2: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneReport {
    pub used: usize,
    pub skipped: usize,
    pub actions: usize,
}

/// Maximum-likelihood fit of the router to the (retriever, generator)
/// choices in clean traces. Traces with any format penalty or unknown
/// candidates are skipped and counted.
pub fn clone_from_traces(
    examples: &[CloneExample],
    registry: &BackendRegistry,
    cfg: &CloneConfig,
) -> Result<(PolicySnapshot, CloneReport), PolicyError> {
    let feature_dim = examples.first().map_or(FEATURE_DIM, |e| e.features.len());
    let mut policy = PolicySnapshot::new(cfg.arch, registry, feature_dim);
    let mut data: Vec<(Vec<f64>, usize, usize)> = Vec::new();
    let mut used = 0;
    let mut skipped = 0;
    for ex in examples {
        if ex.features.len() != feature_dim {
            return Err(PolicyError::Config("clone examples have mixed feature widths".into()));
        }
        let traj = parse_trajectory(&ex.trace);
        let clean = format_reward(&traj, registry).penalty == 0.0;
        let pairs: Option<Vec<(usize, usize)>> = traj
            .search_actions()
            .into_iter()
            .map(|a| {
                let a = a.ok()?;
                Some((policy.graphrag_index(&a.graphrag_id)?, policy.llm_index(&a.llm_id)?))
            })
            .collect();
        match pairs {
            Some(pairs) if clean && !pairs.is_empty() => {
                used += 1;
                let mut previous = None;
                for (g, l) in pairs {
                    data.push((turn_features(&ex.features, previous), g, l));
                    previous = registry.llm(&policy.llm_ids[l]).map(|s| s.tier);
                }
            }
            _ => skipped += 1,
        }
    }
    if data.is_empty() {
        return Err(PolicyError::NoValidTraces { skipped });
    }
    let scale = 1.0 / data.len() as f64;
    for _ in 0..cfg.epochs {
        let mut grad = vec![0.0; policy.params.len()];
        for (x, g, l) in &data {
            policy.add_log_prob_grad(x, *g, *l, 1.0, scale, &mut grad);
        }
        for (p, gr) in policy.params.iter_mut().zip(&grad) {
            *p += cfg.learning_rate * (gr - cfg.l2 * *p);
        }
    }
    if policy.params.iter().any(|p| !p.is_finite()) {
        return Err(PolicyError::NonFiniteGradient);
    }
    policy.reset_reference();
    let actions = data.len();
    Ok((policy, CloneReport { used, skipped, actions }))
}
