//! One routing episode: router output, action execution, state advance.

use std::time::Instant;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::router::{Router, TurnContext};
use super::{HarnessError, QuestionRecord};
use crate::backends::{execute_action, Backend, BackendRegistry, Tier};
use crate::difficulty::DifficultyProfile;
use crate::protocol::{EpisodeState, PendingSearch, RoutingAction, Trajectory};
use crate::reward::{exact_match, f1_score, score_episode, RewardBreakdown, RewardConfig, Stage};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Episode {
    pub question_id: String,
    pub source: String,
    pub transcript: String,
    pub trajectory: Trajectory,
    /// Searches that executed without error.
    pub actions: Vec<RoutingAction>,
    pub invoked_tiers: Vec<Tier>,
    pub invoked_costs: Vec<u32>,
    pub search_turns: usize,
    pub reward: RewardBreakdown,
    pub em: f64,
    pub f1: f64,
    #[serde(skip)]
    pub wall_time_ms: u128,
}

/// How the episode is scored.
#[derive(Debug, Clone, Copy)]
pub struct ScoreContext<'a> {
    pub stage: Stage,
    pub profile: Option<&'a DifficultyProfile>,
    pub reward: &'a RewardConfig,
}

#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    router: &dyn Router,
    registry: &BackendRegistry,
    world: &dyn Backend,
    q: &QuestionRecord,
    features: &[f64],
    max_turns: usize,
    score: ScoreContext<'_>,
    rng: &mut dyn RngCore,
) -> Result<Episode, HarnessError> {
    if max_turns == 0 {
        return Err(HarnessError::Config("max_turns must be at least 1".into()));
    }
    let started = Instant::now();
    let mut state = EpisodeState::new(q.question.clone(), max_turns);
    let mut actions: Vec<RoutingAction> = Vec::new();
    let mut tiers = Vec::new();
    let mut costs = Vec::new();
    let mut search_turns = 0;

    while !state.terminated {
        let output = {
            let ctx = TurnContext { question: q, features, state: &state, registry, tried: &actions };
            router.next_output(&ctx, rng)
        };
        state = state.advance(&output, None)?;
        let info = match state.pending.clone() {
            None => continue,
            Some(PendingSearch::Invalid(reason)) => format!("Search not executed: {reason}."),
            Some(PendingSearch::Valid(action)) => match execute_action(&action, &q.id, registry, world, rng) {
                Ok(generation) => {
                    let llm = registry.llm(&action.llm_id).expect("validated by execute_action");
                    tiers.push(llm.tier);
                    costs.push(llm.cost());
                    actions.push(action);
                    generation.text
                }
                Err(e) => format!("backend error: {e}"),
            },
        };
        search_turns += 1;
        state = state.deliver(&info)?;
    }

    let trajectory = state.history;
    let reward = score_episode(&trajectory, &q.golden_answers, &costs, score.profile, registry, score.stage, score.reward)?;
    let answer = trajectory.final_answer();
    Ok(Episode {
        question_id: q.id.clone(),
        source: q.source.clone(),
        em: exact_match(answer, &q.golden_answers),
        f1: f1_score(answer, &q.golden_answers),
        transcript: state.transcript,
        trajectory,
        actions,
        invoked_tiers: tiers,
        invoked_costs: costs,
        search_turns,
        reward,
        wall_time_ms: started.elapsed().as_millis(),
    })
}
