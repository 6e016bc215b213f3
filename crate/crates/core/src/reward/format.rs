//! Fine-grained format penalty.
//!
//! Twelve rules, each an indicator over the whole trajectory with a fixed
//! weight. Weights are held in tenths so sums and the clip are exact.

use serde::{Deserialize, Serialize};

use crate::backends::BackendRegistry;
use crate::protocol::{SegmentKind, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatRule {
    Fatal,
    MissingThink,
    LlmBeforeGraphrag,
    MissingGraphrag,
    InvalidGraphragName,
    MissingSecondStageReasoning,
    MissingLlmBeforeSearch,
    InvalidLlmName,
    MissingSearch,
    InvalidSearchFormat,
    InvalidAnswerCardinality,
    EmptyReasoning,
}

impl FormatRule {
    pub const ALL: [FormatRule; 12] = [
        FormatRule::Fatal,
        FormatRule::MissingThink,
        FormatRule::LlmBeforeGraphrag,
        FormatRule::MissingGraphrag,
        FormatRule::InvalidGraphragName,
        FormatRule::MissingSecondStageReasoning,
        FormatRule::MissingLlmBeforeSearch,
        FormatRule::InvalidLlmName,
        FormatRule::MissingSearch,
        FormatRule::InvalidSearchFormat,
        FormatRule::InvalidAnswerCardinality,
        FormatRule::EmptyReasoning,
    ];

    /// Base weight in tenths.
    pub fn tenths(self) -> u32 {
        match self {
            FormatRule::Fatal => 10,
            FormatRule::MissingThink => 4,
            FormatRule::LlmBeforeGraphrag => 8,
            FormatRule::MissingGraphrag => 4,
            FormatRule::InvalidGraphragName => 2,
            FormatRule::MissingSecondStageReasoning => 3,
            FormatRule::MissingLlmBeforeSearch => 3,
            FormatRule::InvalidLlmName => 1,
            FormatRule::MissingSearch => 4,
            FormatRule::InvalidSearchFormat => 3,
            FormatRule::InvalidAnswerCardinality => 3,
            FormatRule::EmptyReasoning => 2,
        }
    }

    pub fn weight(self) -> f64 {
        f64::from(self.tenths()) / 10.0
    }

    pub fn is_fatal(self) -> bool {
        self == FormatRule::Fatal
    }
}

/// Missing retriever selection when a search is issued anyway. Replaces the base weight.
pub const MISSING_GRAPHRAG_ESCALATED_TENTHS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleHit {
    pub rule: FormatRule,
    pub tenths: u32,
}

impl RuleHit {
    fn base(rule: FormatRule) -> Self {
        RuleHit { rule, tenths: rule.tenths() }
    }

    pub fn weight(&self) -> f64 {
        f64::from(self.tenths) / 10.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatScore {
    /// Positive magnitude in [0, 1]; the reward is its negation.
    pub penalty: f64,
    pub fired: Vec<RuleHit>,
}

impl FormatScore {
    pub fn rules(&self) -> Vec<FormatRule> {
        self.fired.iter().map(|h| h.rule).collect()
    }

    fn from_hits(fired: Vec<RuleHit>) -> Self {
        let total: u32 = fired.iter().map(|h| h.tenths).sum();
        FormatScore { penalty: f64::from(total.min(10)) / 10.0, fired }
    }
}

/// Placeholder reasoning: empty after trimming, or only an ellipsis.
pub fn is_placeholder_reasoning(content: &str) -> bool {
    matches!(content.trim(), "" | "..." | "…")
}

/// Scores a trajectory against the twelve format rules.
pub fn format_reward(trajectory: &Trajectory, registry: &BackendRegistry) -> FormatScore {
    if !trajectory.defects.is_empty() {
        return FormatScore::from_hits(vec![RuleHit::base(FormatRule::Fatal)]);
    }

    let segs: Vec<_> = trajectory.segments.iter().filter(|s| s.kind != SegmentKind::FreeText).collect();
    let is_valid_graphrag = |i: usize| segs[i].kind == SegmentKind::GraphRag && registry.is_valid_graphrag(segs[i].content.trim());
    let is_valid_llm = |i: usize| segs[i].kind == SegmentKind::Llm && registry.is_valid_llm(segs[i].content.trim());
    let positions = |kind: SegmentKind| segs.iter().enumerate().filter(move |(_, s)| s.kind == kind).map(|(i, _)| i);

    let searches: Vec<usize> = positions(SegmentKind::Search).collect();
    let first_valid_graphrag = (0..segs.len()).find(|&i| is_valid_graphrag(i));
    let first_llm = positions(SegmentKind::Llm).next();

    let mut fired = Vec::new();

    if positions(SegmentKind::Think).next().is_none() {
        fired.push(RuleHit::base(FormatRule::MissingThink));
    }
    if let Some(l) = first_llm {
        if first_valid_graphrag.is_none_or(|g| l < g) {
            fired.push(RuleHit::base(FormatRule::LlmBeforeGraphrag));
        }
    }
    if first_valid_graphrag.is_none() {
        let tenths = if searches.is_empty() { FormatRule::MissingGraphrag.tenths() } else { MISSING_GRAPHRAG_ESCALATED_TENTHS };
        fired.push(RuleHit { rule: FormatRule::MissingGraphrag, tenths });
    }
    if positions(SegmentKind::GraphRag).any(|i| !is_valid_graphrag(i)) {
        fired.push(RuleHit::base(FormatRule::InvalidGraphragName));
    }

    // Search-scoped rules look at the window since the previous search.
    let windows: Vec<(usize, usize)> = searches
        .iter()
        .enumerate()
        .map(|(n, &s)| (if n == 0 { 0 } else { searches[n - 1] + 1 }, s))
        .collect();
    if windows.iter().any(|&(a, b)| (a..b).filter(|&i| segs[i].kind == SegmentKind::Think).count() < 2) {
        fired.push(RuleHit::base(FormatRule::MissingSecondStageReasoning));
    }
    if windows.iter().any(|&(a, b)| !(a..b).any(is_valid_llm)) {
        fired.push(RuleHit::base(FormatRule::MissingLlmBeforeSearch));
    }

    if positions(SegmentKind::Llm).any(|i| !is_valid_llm(i)) {
        fired.push(RuleHit::base(FormatRule::InvalidLlmName));
    }
    if searches.is_empty() {
        fired.push(RuleHit::base(FormatRule::MissingSearch));
    }
    if searches.iter().any(|&i| {
        let c = &segs[i].content;
        c.matches(':').count() != 1 || c.matches(';').count() != 1
    }) {
        fired.push(RuleHit::base(FormatRule::InvalidSearchFormat));
    }
    if positions(SegmentKind::Answer).count() != 1 {
        fired.push(RuleHit::base(FormatRule::InvalidAnswerCardinality));
    }
    if positions(SegmentKind::Think).any(|i| is_placeholder_reasoning(&segs[i].content)) {
        fired.push(RuleHit::base(FormatRule::EmptyReasoning));
    }

    FormatScore::from_hits(fired)
}
