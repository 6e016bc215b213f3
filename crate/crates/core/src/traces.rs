//! Supervised trace construction and validation.
//!
//! Builders render single-round and two-round (self-correcting) traces in
//! the fixed tag order. The validator reports the format penalty, the turn
//! structure, the routing actions and any comparative wording in the text.

use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{answer_text, extract_answer, BackendRegistry, SimWorld, INSUFFICIENT_TEXT};
use crate::harness::{sanitize_query, QuestionRecord};
use crate::protocol::{parse_trajectory, render_turn, PlanItem, ProtocolError, RoutingAction, SegmentKind};
use crate::reward::{format_reward, is_placeholder_reasoning, FormatRule};
use crate::seed::rng_for;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TraceError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("trace corpus: {0}")]
    Corpus(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub graphrag_id: String,
    pub llm_id: String,
    pub information: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralTracePlan {
    pub question: String,
    pub route: RoutePlan,
    pub answer: String,
    /// Before the retriever, before the generator, before the answer.
    pub rationales: [String; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionTracePlan {
    pub question: String,
    pub round1: RoutePlan,
    pub round2: RoutePlan,
    pub answer: String,
    /// Retriever 1, generator 1, bridge, generator 2, answer.
    pub rationales: [String; 5],
}

fn check_rationales(rationales: &[String]) -> Result<(), TraceError> {
    match rationales.iter().position(|r| is_placeholder_reasoning(r)) {
        Some(i) => Err(TraceError::InvalidPlan(format!("rationale {} is empty", i + 1))),
        None => Ok(()),
    }
}

fn check_route(route: &RoutePlan, registry: &BackendRegistry) -> Result<(), TraceError> {
    if !registry.is_valid_graphrag(&route.graphrag_id) {
        return Err(TraceError::InvalidPlan(format!("unknown graphrag '{}'", route.graphrag_id)));
    }
    if !registry.is_valid_llm(&route.llm_id) {
        return Err(TraceError::InvalidPlan(format!("unknown llm '{}'", route.llm_id)));
    }
    Ok(())
}

fn route_items(question: &str, route: &RoutePlan, before_graphrag: &str, before_llm: &str) -> Vec<PlanItem> {
    vec![
        PlanItem::new(SegmentKind::Think, before_graphrag),
        PlanItem::new(SegmentKind::GraphRag, route.graphrag_id.as_str()),
        PlanItem::new(SegmentKind::Think, before_llm),
        PlanItem::new(SegmentKind::Llm, route.llm_id.as_str()),
        PlanItem::new(SegmentKind::Search, format!("{}:{};{}", sanitize_query(question), route.llm_id, route.graphrag_id)),
        PlanItem::new(SegmentKind::Information, route.information.as_str()),
    ]
}

fn render(items: &[PlanItem]) -> Result<String, TraceError> {
    render_turn(items).map_err(|e| match e {
        ProtocolError::EmbeddedTag(i) => TraceError::InvalidPlan(format!("plan item {i} contains a tag marker")),
        other => TraceError::Protocol(other),
    })
}

/// think, graphrag, think, llm, search, information, think, answer.
pub fn build_general_trace(plan: &GeneralTracePlan, registry: &BackendRegistry) -> Result<String, TraceError> {
    check_rationales(&plan.rationales)?;
    check_route(&plan.route, registry)?;
    if plan.answer.trim().is_empty() {
        return Err(TraceError::InvalidPlan("answer is empty".into()));
    }
    let [r1, r2, r3] = &plan.rationales;
    let mut items = route_items(&plan.question, &plan.route, r1, r2);
    items.push(PlanItem::new(SegmentKind::Think, r3.as_str()));
    items.push(PlanItem::new(SegmentKind::Answer, plan.answer.as_str()));
    render(&items)
}

/// Two rounds joined by one bridge think; the first round's information
/// must not carry an answer.
pub fn build_reflection_trace(plan: &ReflectionTracePlan, registry: &BackendRegistry) -> Result<String, TraceError> {
    check_rationales(&plan.rationales)?;
    check_route(&plan.round1, registry)?;
    check_route(&plan.round2, registry)?;
    if plan.answer.trim().is_empty() {
        return Err(TraceError::InvalidPlan("answer is empty".into()));
    }
    if extract_answer(&plan.round1.information).is_some() {
        return Err(TraceError::InvalidPlan("first-round information already answers the question".into()));
    }
    let [r1, r2, bridge, r4, r5] = &plan.rationales;
    let mut items = route_items(&plan.question, &plan.round1, r1, r2);
    items.extend(route_items(&plan.question, &plan.round2, bridge, r4));
    items.push(PlanItem::new(SegmentKind::Think, r5.as_str()));
    items.push(PlanItem::new(SegmentKind::Answer, plan.answer.as_str()));
    render(&items)
}

/// Comparative wording barred from rationales.
pub const FORBIDDEN_TERMS: [&str; 11] = [
    "better",
    "best",
    "more suitable",
    "preferred",
    "ideal",
    "optimal",
    "superior",
    "worse",
    "outperform",
    "more accurate",
    "more efficient",
];

fn lint_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        let alts: Vec<String> = FORBIDDEN_TERMS
            .iter()
            .map(|t| {
                let body = t.split(' ').map(regex::escape).collect::<Vec<_>>().join(r"\s+");
                // "outperform" also covers its inflections.
                if *t == "outperform" {
                    format!(r"{body}\w*")
                } else {
                    body
                }
            })
            .collect();
        Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).expect("lint pattern compiles")
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LintHit {
    pub term: String,
    /// Byte span in the trace text.
    pub span: (usize, usize),
}

/// Forbidden terms inside think segments.
pub fn lint(text: &str) -> Vec<LintHit> {
    let traj = parse_trajectory(text);
    traj.of_kind(SegmentKind::Think)
        .flat_map(|seg| {
            let offset = seg.span.0 + "<think>".len();
            lint_regex().find_iter(&seg.content).map(move |m| LintHit {
                term: m.as_str().to_lowercase(),
                span: (offset + m.start(), offset + m.end()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub penalty: f64,
    pub fired: Vec<FormatRule>,
    pub turn_count: usize,
    /// Parsed search actions; malformed ones are omitted.
    pub actions: Vec<RoutingAction>,
    pub lint: Vec<LintHit>,
}

impl TraceReport {
    pub fn is_clean(&self) -> bool {
        self.penalty == 0.0 && self.lint.is_empty()
    }
}

pub fn validate_trace(text: &str, registry: &BackendRegistry) -> TraceReport {
    let traj = parse_trajectory(text);
    let score = format_reward(&traj, registry);
    TraceReport {
        penalty: score.penalty,
        fired: score.rules(),
        turn_count: traj.turns.len(),
        actions: traj.search_actions().into_iter().filter_map(Result::ok).collect(),
        lint: lint(text),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    General,
    Reflection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_id: Option<String>,
    pub question: String,
    pub trace_text: String,
    pub kind: TraceKind,
    pub gold_answers: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub general: usize,
    pub reflection: usize,
}

impl CorpusManifest {
    pub fn of(records: &[TraceRecord]) -> Self {
        let count = |k| records.iter().filter(|r| r.kind == k).count();
        CorpusManifest { general: count(TraceKind::General), reflection: count(TraceKind::Reflection) }
    }

    pub fn ratio(&self) -> String {
        format!("{}:{}", self.general, self.reflection)
    }
}

pub fn write_corpus(path: &Path, records: &[TraceRecord]) -> Result<CorpusManifest, TraceError> {
    let text: String = records.iter().map(|r| serde_json::to_string(r).expect("record serializes") + "\n").collect();
    std::fs::write(path, text).map_err(|e| TraceError::Corpus(format!("{}: {e}", path.display())))?;
    Ok(CorpusManifest::of(records))
}

pub fn read_corpus(path: &Path) -> Result<Vec<TraceRecord>, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| TraceError::Corpus(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| TraceError::Corpus(format!("line {}: {e}", n + 1))))
        .collect()
}

/// Which capable generator a synthesized trace routes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorChoice {
    /// Largest tier among those able to answer.
    #[default]
    Largest,
    /// Cheapest tier among those able to answer.
    Cheapest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub reflection: usize,
    pub generator: GeneratorChoice,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig { reflection: 0, generator: GeneratorChoice::Largest, seed: 0 }
    }
}

fn general_rationales(g: &str, l: &str) -> [String; 3] {
    [
        format!("The question needs facts from an indexed corpus. {g} supports retrieval over this kind of material."),
        format!("{l} is able to read the passages {g} returns and state a short answer."),
        "The information states the answer explicitly, so it can be given now.".to_string(),
    ]
}

fn reflection_rationales(g1: &str, l1: &str, g2: &str, l2: &str) -> [String; 5] {
    [
        format!("The question needs facts from an indexed corpus. {g1} can retrieve related passages."),
        format!("{l1} is able to read those passages and state a short answer."),
        format!("The first information block does not contain the asked fact, so the route changes. {g2} supports retrieval for this topic."),
        format!("{l2} is able to read the passages {g2} returns and state a short answer."),
        "The second information block states the answer explicitly, so it can be given now.".to_string(),
    ]
}

/// Builds a supervised corpus from the world script: every answerable
/// question gets a trace through a solving route. `cfg.reflection` of them,
/// chosen by seed, first try a non-solving retriever.
pub fn synthesize_corpus(
    dataset: &[QuestionRecord],
    world: &SimWorld,
    registry: &BackendRegistry,
    cfg: &CorpusConfig,
) -> Result<Vec<TraceRecord>, TraceError> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng_for(cfg.seed, &["corpus"]));
    let reflect: std::collections::BTreeSet<usize> = order.into_iter().take(cfg.reflection).collect();

    let mut out = Vec::new();
    for (i, q) in dataset.iter().enumerate() {
        let Some(entry) = world.script().questions.get(&q.id) else { continue };
        let mut solving: Vec<(f64, u32, usize, &str, &str)> = Vec::new();
        for g in &registry.graphrags {
            for (li, l) in registry.llms.iter().enumerate() {
                let p = entry.pair_odds(&g.id, l.tier);
                if p > 0.0 {
                    solving.push((p, l.cost(), li, &g.id, &l.id));
                }
            }
        }
        let top = solving.iter().map(|s| s.0).fold(0.0, f64::max);
        solving.retain(|s| s.0 == top);
        let pick = match cfg.generator {
            GeneratorChoice::Largest => solving.iter().max_by(|a, b| a.1.cmp(&b.1).then(b.2.cmp(&a.2))),
            GeneratorChoice::Cheapest => solving.iter().min_by(|a, b| a.1.cmp(&b.1).then(a.2.cmp(&b.2))),
        };
        let Some(&(_, _, _, g, l)) = pick else { continue };
        let answer = entry.answer.clone();
        let good = RoutePlan { graphrag_id: g.to_string(), llm_id: l.to_string(), information: answer_text(&answer, &entry.evidence) };

        let miss = registry.graphrags.iter().find(|c| !entry.retrievable_by(&c.id)).map(|c| c.id.clone());
        let (text, kind) = match miss.filter(|_| reflect.contains(&i)) {
            Some(bad) => {
                let plan = ReflectionTracePlan {
                    question: q.question.clone(),
                    round1: RoutePlan { graphrag_id: bad.clone(), llm_id: l.to_string(), information: INSUFFICIENT_TEXT.to_string() },
                    round2: good,
                    answer,
                    rationales: reflection_rationales(&bad, l, g, l),
                };
                (build_reflection_trace(&plan, registry)?, TraceKind::Reflection)
            }
            None => {
                let plan = GeneralTracePlan { question: q.question.clone(), route: good, answer, rationales: general_rationales(g, l) };
                (build_general_trace(&plan, registry)?, TraceKind::General)
            }
        };
        out.push(TraceRecord {
            question_id: Some(q.id.clone()),
            question: q.question.clone(),
            trace_text: text,
            kind,
            gold_answers: q.golden_answers.clone(),
        });
    }
    Ok(out)
}
