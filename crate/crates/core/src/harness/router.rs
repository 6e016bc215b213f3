//! Turn-level routers: each produces the next model output of an episode.

use rand::{Rng, RngCore};

use super::QuestionRecord;
use crate::backends::{extract_answer, BackendRegistry, SimWorld};
use crate::policy::{turn_features, PolicySnapshot};
use crate::protocol::{escape_markers, EpisodeState, RoutingAction};

/// Answer given when no route produced one in time.
pub const FALLBACK_ANSWER: &str = "unknown";

pub struct TurnContext<'a> {
    pub question: &'a QuestionRecord,
    pub features: &'a [f64],
    pub state: &'a EpisodeState,
    pub registry: &'a BackendRegistry,
    /// Actions executed so far, in order.
    pub tried: &'a [RoutingAction],
}

pub trait Router: Send + Sync {
    fn next_output(&self, ctx: &TurnContext<'_>, rng: &mut dyn RngCore) -> String;
}

/// Query text safe to embed in a search action.
pub fn sanitize_query(question: &str) -> String {
    let cleaned: String = question.chars().map(|c| if c == ':' || c == ';' { ',' } else { c }).collect();
    let cleaned = escape_markers(cleaned.split_whitespace().collect::<Vec<_>>().join(" ").as_str());
    if cleaned.is_empty() {
        "question".to_string()
    } else {
        cleaned
    }
}

fn answer_output(answer: &str, found: bool) -> String {
    let think = if found {
        "The returned information states an answer to the question, so it can be given directly."
    } else {
        "No route has produced a usable answer within the turn budget, so a fallback answer is given."
    };
    format!("<think>{think}</think><answer>{}</answer>", escape_markers(answer))
}

fn search_output(ctx: &TurnContext<'_>, graphrag: &str, llm: &str) -> String {
    let first = match ctx.tried.last() {
        None => format!(
            "Answering this needs evidence from an indexed corpus. Retrieval will go through {graphrag}, whose graph structure suits the question."
        ),
        Some(prev) => format!(
            "The route {}/{} did not yield a usable answer. Trying {graphrag} for retrieval this round.",
            prev.graphrag_id, prev.llm_id
        ),
    };
    let second = format!("{llm} will read the retrieved passages and write the answer.");
    format!(
        "<think>{}</think><graphrag>{}</graphrag><think>{}</think><llm>{}</llm><search>{}:{};{}</search>",
        escape_markers(&first),
        escape_markers(graphrag),
        escape_markers(&second),
        escape_markers(llm),
        sanitize_query(&ctx.question.question),
        llm,
        graphrag
    )
}

/// Shared turn template. Answers as soon as the latest information carries
/// one, falls back on the last available turn, and otherwise searches with
/// the pair `pick` supplies.
pub fn templated_output(ctx: &TurnContext<'_>, pick: impl FnOnce() -> Option<(String, String)>) -> String {
    if let Some(answer) = ctx.state.last_information().and_then(extract_answer) {
        return answer_output(&answer, true);
    }
    if ctx.state.turn_index + 1 >= ctx.state.max_turns {
        return answer_output(FALLBACK_ANSWER, false);
    }
    match pick() {
        Some((g, l)) => search_output(ctx, &g, &l),
        None => answer_output(FALLBACK_ANSWER, false),
    }
}

/// Samples each turn's pair from a policy snapshot.
pub struct PolicyRouter<'a> {
    pub policy: &'a PolicySnapshot,
    pub temperature: f64,
}

impl Router for PolicyRouter<'_> {
    fn next_output(&self, ctx: &TurnContext<'_>, rng: &mut dyn RngCore) -> String {
        templated_output(ctx, || {
            let previous = ctx.tried.last().and_then(|a| ctx.registry.llm(&a.llm_id)).map(|l| l.tier);
            let x = turn_features(ctx.features, previous);
            let a = self.policy.sample(&x, self.temperature, rng).ok()?;
            Some((self.policy.graphrag_ids[a.graphrag].clone(), self.policy.llm_ids[a.llm].clone()))
        })
    }
}

/// Uniform over all registered pairs.
pub struct UniformRouter;

impl Router for UniformRouter {
    fn next_output(&self, ctx: &TurnContext<'_>, rng: &mut dyn RngCore) -> String {
        templated_output(ctx, || {
            let (gs, ls) = (ctx.registry.graphrag_ids(), ctx.registry.llm_ids());
            if gs.is_empty() || ls.is_empty() {
                return None;
            }
            let g = rng.gen_range(0..gs.len());
            let l = rng.gen_range(0..ls.len());
            Some((gs[g].clone(), ls[l].clone()))
        })
    }
}

/// Knows the world script: picks the untried pair most likely to succeed,
/// breaking ties by lower cost and then registry order.
pub struct OracleRouter<'a> {
    pub world: &'a SimWorld,
}

impl OracleRouter<'_> {
    pub fn choose(&self, question_id: &str, registry: &BackendRegistry, tried: &[RoutingAction]) -> Option<(String, String)> {
        let mut best: Option<(f64, u32, String, String)> = None;
        for g in &registry.graphrags {
            for l in &registry.llms {
                if tried.iter().any(|a| a.graphrag_id == g.id && a.llm_id == l.id) {
                    continue;
                }
                let p = self.world.success_odds(question_id, &g.id, &l.id).unwrap_or(0.0);
                let better = match &best {
                    None => true,
                    Some((bp, bc, _, _)) => p > *bp || (p == *bp && l.cost() < *bc),
                };
                if better {
                    best = Some((p, l.cost(), g.id.clone(), l.id.clone()));
                }
            }
        }
        best.map(|(_, _, g, l)| (g, l))
    }
}

impl Router for OracleRouter<'_> {
    fn next_output(&self, ctx: &TurnContext<'_>, _rng: &mut dyn RngCore) -> String {
        templated_output(ctx, || self.choose(&ctx.question.id, ctx.registry, ctx.tried))
    }
}

/// Follows a fixed list of (graphrag, llm) pairs, one per search turn,
/// repeating the last pair if the list runs out.
pub struct ForcedRouter {
    pub plan: Vec<(String, String)>,
}

impl ForcedRouter {
    /// Parses `G:L,G:L,...`.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let plan = spec
            .split(',')
            .map(|pair| {
                let (g, l) = pair.split_once(':').ok_or_else(|| format!("route '{pair}' is not GRAPHRAG:LLM"))?;
                let (g, l) = (g.trim(), l.trim());
                if g.is_empty() || l.is_empty() {
                    return Err(format!("route '{pair}' has an empty part"));
                }
                Ok((g.to_string(), l.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ForcedRouter { plan })
    }
}

impl Router for ForcedRouter {
    fn next_output(&self, ctx: &TurnContext<'_>, _rng: &mut dyn RngCore) -> String {
        let n = ctx.state.turn_index;
        templated_output(ctx, || self.plan.get(n).or(self.plan.last()).cloned())
    }
}

/// Emits raw outputs verbatim, one per turn; the last repeats.
pub struct ScriptedRouter {
    pub outputs: Vec<String>,
}

impl Router for ScriptedRouter {
    fn next_output(&self, ctx: &TurnContext<'_>, _rng: &mut dyn RngCore) -> String {
        let n = ctx.state.turn_index;
        self.outputs.get(n).or(self.outputs.last()).cloned().unwrap_or_default()
    }
}
