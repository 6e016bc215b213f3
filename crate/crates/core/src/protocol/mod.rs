//! Tagged trajectory protocol: lexing, parsing, rendering, and the per-episode
//! routing state machine.

mod lexer;
mod state;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lexer::{tokenize, DefectKind, Segment, SegmentKind, Span, StructuralDefect};
pub use state::{EpisodeState, PendingSearch};

/// Default bound on routing turns per episode.
pub const DEFAULT_MAX_TURNS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("invalid search format: {0}")]
    InvalidSearchFormat(String),
    #[error("episode already terminated")]
    EpisodeAlreadyTerminated,
    #[error("tool result supplied but no search is pending")]
    NoPendingSearch,
    #[error("cannot render a {0:?} defect")]
    UnrenderableKind(DefectKind),
    #[error("plan item {0} contains an embedded tag marker")]
    EmbeddedTag(usize),
}

/// Half-open index range into `Trajectory::segments`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
    pub defects: Vec<StructuralDefect>,
    pub turns: Vec<Turn>,
}

impl Trajectory {
    pub fn count(&self, kind: SegmentKind) -> usize {
        self.segments.iter().filter(|s| s.kind == kind).count()
    }

    pub fn of_kind(&self, kind: SegmentKind) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.kind == kind)
    }

    /// Trimmed content of the first answer segment.
    pub fn final_answer(&self) -> Option<&str> {
        self.of_kind(SegmentKind::Answer).next().map(|s| s.content.trim())
    }

    /// Segments of one turn.
    pub fn turn(&self, turn: Turn) -> &[Segment] {
        &self.segments[turn.start..turn.end]
    }

    /// Routing actions of every search segment, in order, as parse results.
    pub fn search_actions(&self) -> Vec<Result<RoutingAction, ProtocolError>> {
        self.of_kind(SegmentKind::Search).map(|s| parse_search_action(&s.content)).collect()
    }
}

/// Parses with the default turn bound.
pub fn parse_trajectory(text: &str) -> Trajectory {
    parse_trajectory_bounded(text, DEFAULT_MAX_TURNS)
}

/// Lexes `text` and delimits turns. Whitespace-only gaps between tags are
/// dropped; other free text is kept. Turns past `max_turns` are not recorded.
pub fn parse_trajectory_bounded(text: &str, max_turns: usize) -> Trajectory {
    let (raw, defects) = tokenize(text);
    let segments: Vec<Segment> = raw
        .into_iter()
        .filter(|s| s.kind != SegmentKind::FreeText || !s.content.trim().is_empty())
        .collect();

    let mut turns = Vec::new();
    let mut start = 0;
    let mut answered = false;
    for (i, seg) in segments.iter().enumerate() {
        match seg.kind {
            SegmentKind::Information => {
                turns.push(Turn { start, end: i + 1 });
                start = i + 1;
            }
            SegmentKind::Answer => {
                turns.push(Turn { start, end: i + 1 });
                answered = true;
                break;
            }
            _ => {}
        }
    }
    if !answered && segments[start.min(segments.len())..].iter().any(|s| s.kind != SegmentKind::FreeText) {
        turns.push(Turn { start, end: segments.len() });
    }
    turns.truncate(max_turns);

    Trajectory { segments, defects, turns }
}

/// One routing decision: which generator reads which retriever's evidence for a query.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RoutingAction {
    pub query: String,
    pub llm_id: String,
    pub graphrag_id: String,
}

/// Parses `Query:LLM;GraphRAG`. Exactly one `:` and one `;` are required and
/// every trimmed part must be non-empty.
pub fn parse_search_action(content: &str) -> Result<RoutingAction, ProtocolError> {
    let colons = content.matches(':').count();
    let semis = content.matches(';').count();
    if colons != 1 || semis != 1 {
        return Err(ProtocolError::InvalidSearchFormat(format!(
            "expected one ':' and one ';', found {colons} and {semis}"
        )));
    }
    let (query, rest) = content.split_once(':').expect("one colon");
    let Some((llm, graphrag)) = rest.split_once(';') else {
        return Err(ProtocolError::InvalidSearchFormat("';' must follow ':'".into()));
    };
    let (query, llm, graphrag) = (query.trim(), llm.trim(), graphrag.trim());
    if query.is_empty() || llm.is_empty() || graphrag.is_empty() {
        return Err(ProtocolError::InvalidSearchFormat("empty query, llm or graphrag".into()));
    }
    Ok(RoutingAction { query: query.to_string(), llm_id: llm.to_string(), graphrag_id: graphrag.to_string() })
}

/// Formats an action as search-segment content.
pub fn format_search_action(action: &RoutingAction) -> String {
    format!("{}:{};{}", action.query, action.llm_id, action.graphrag_id)
}

/// One entry of a render plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanItem {
    Segment { kind: SegmentKind, content: String },
    Defect(DefectKind),
}

impl PlanItem {
    pub fn new(kind: SegmentKind, content: impl Into<String>) -> Self {
        PlanItem::Segment { kind, content: content.into() }
    }
}

/// Renders a plan to tagged text; the inverse of [`tokenize`] for defect-free plans.
pub fn render_turn(parts: &[PlanItem]) -> Result<String, ProtocolError> {
    let mut out = String::new();
    for (i, part) in parts.iter().enumerate() {
        match part {
            PlanItem::Defect(kind) => return Err(ProtocolError::UnrenderableKind(*kind)),
            PlanItem::Segment { kind, content } => {
                if contains_marker(content) {
                    return Err(ProtocolError::EmbeddedTag(i));
                }
                match kind.tag() {
                    Some(tag) => {
                        out.push('<');
                        out.push_str(tag);
                        out.push('>');
                        out.push_str(content);
                        out.push_str("</");
                        out.push_str(tag);
                        out.push('>');
                    }
                    None => out.push_str(content),
                }
            }
        }
    }
    Ok(out)
}

/// True when `text` contains a marker for one of the six protocol tags.
pub fn contains_marker(text: &str) -> bool {
    SegmentKind::TAGGED.iter().any(|k| {
        let tag = k.tag().expect("tagged kind");
        text.contains(&format!("<{tag}>")) || text.contains(&format!("</{tag}>"))
    })
}

/// Neutralizes tag markers in externally produced text before it is spliced
/// into a trajectory.
pub fn escape_markers(text: &str) -> String {
    if contains_marker(text) {
        text.replace('<', "&lt;")
    } else {
        text.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use SegmentKind::*;

    pub(crate) const ANTONINE_HIERARCHICAL: &str = "<think>Question asks for the birth/death date of the Antonine known as the third of the five good emperors; needs explicit factual retrieval of a short entity timeline, which HippoRAG2 supports.</think>\n<graphrag>HippoRAG2</graphrag>\n<think>HippoRAG2 can provide a concise factual context via structured triples linking name and lifespan; LLaMA-3.1-70B-Instruct is able to read that context and produce the requested single-date answer.</think>\n<llm>LLaMA-3.1-70B-Instruct</llm>\n<search>When did the the Antonine who was known as the third of the five good emperors live?: LLaMA-3.1-70B-Instruct; HippoRAG2</search>\n<information>Explanation: I cannot confidently answer this question based on the given Context. Please consult other specialized LLMs or retrieve from other knowledge bases for further assistance.</information>\n<think>The first information block states it cannot answer based on the given context, so it is insufficient; switch to RAPTOR to support relational retrieval connecting the name to an explicit date.</think>\n<graphrag>RAPTOR</graphrag>\n<think>LLaMA-3.1-70B-Instruct is able to use RAPTOR's factual retrieval snippets to locate an explicit statement about when Antoninus Pius lived.</think>\n<llm>LLaMA-3.1-70B-Instruct</llm>\n<search>When did the the Antonine who was known as the third of the five good emperors live?: LLaMA-3.1-70B-Instruct; RAPTOR</search>\n<information>Answer: 24 January 76 – 10 July 138. Explanation: According to the Context, Hadrian is considered the third of the Five Good Emperors.</information>\n<think>The second information block states the explicit lifespan, so it is sufficient to answer the question.</think>\n<answer>24 January 76 – 10 July 138</answer>";

    #[test]
    fn case_study_rollout_structure() {
        let t = parse_trajectory(ANTONINE_HIERARCHICAL);
        assert!(t.defects.is_empty());
        let kinds: Vec<_> = t.segments.iter().map(|s| s.kind).collect();
        assert_eq!(
            kinds,
            vec![
                Think, GraphRag, Think, Llm, Search, Information, Think, GraphRag, Think, Llm, Search, Information,
                Think, Answer
            ]
        );
        assert_eq!(t.turns, vec![Turn { start: 0, end: 6 }, Turn { start: 6, end: 12 }, Turn { start: 12, end: 14 }]);
        assert_eq!(t.count(Search), 2);
        assert_eq!(t.final_answer(), Some("24 January 76 – 10 July 138"));
    }

    #[test]
    fn empty_input() {
        let t = parse_trajectory("");
        assert!(t.segments.is_empty());
        assert_eq!(t.defects.len(), 1);
        assert_eq!(t.defects[0].kind, DefectKind::NoValidTags);
        assert!(t.turns.is_empty());
    }

    #[test]
    fn general_template_order() {
        let plan = [
            PlanItem::new(Think, "r1"),
            PlanItem::new(GraphRag, "HippoRAG2"),
            PlanItem::new(Think, "r2"),
            PlanItem::new(Llm, "Qwen2.5-7B-Instruct"),
            PlanItem::new(Search, "q:Qwen2.5-7B-Instruct;HippoRAG2"),
            PlanItem::new(Information, "info"),
            PlanItem::new(Think, "r3"),
            PlanItem::new(Answer, "a"),
        ];
        let text = render_turn(&plan).unwrap();
        let t = parse_trajectory(&text);
        assert_eq!(t.segments.len(), 8);
        assert_eq!(
            t.segments.iter().map(|s| s.kind).collect::<Vec<_>>(),
            vec![Think, GraphRag, Think, Llm, Search, Information, Think, Answer]
        );
        assert_eq!(t.turns.len(), 2);
    }

    #[test]
    fn search_action_parsing() {
        let a = parse_search_action(
            "When did the the Antonine who was known as the third of the five good emperors live?: LLaMA-3.1-70B-Instruct; RAPTOR",
        )
        .unwrap();
        assert_eq!(a.query, "When did the the Antonine who was known as the third of the five good emperors live?");
        assert_eq!(a.llm_id, "LLaMA-3.1-70B-Instruct");
        assert_eq!(a.graphrag_id, "RAPTOR");

        assert!(matches!(parse_search_action("q:onlyllm"), Err(ProtocolError::InvalidSearchFormat(_))));
        assert!(matches!(parse_search_action("a:b;c;d"), Err(ProtocolError::InvalidSearchFormat(_))));
        assert!(matches!(parse_search_action("a;b:c"), Err(ProtocolError::InvalidSearchFormat(_))));
        assert!(matches!(parse_search_action(" :b;c"), Err(ProtocolError::InvalidSearchFormat(_))));
    }

    #[test]
    fn render_examples() {
        let text = render_turn(&[PlanItem::new(Think, "x"), PlanItem::new(Answer, "Beijing")]).unwrap();
        assert_eq!(text, "<think>x</think><answer>Beijing</answer>");
        assert_eq!(render_turn(&[]).unwrap(), "");
        assert_eq!(
            render_turn(&[PlanItem::Defect(DefectKind::NestedTag)]),
            Err(ProtocolError::UnrenderableKind(DefectKind::NestedTag))
        );
        assert_eq!(render_turn(&[PlanItem::new(Think, "<answer>")]), Err(ProtocolError::EmbeddedTag(0)));
    }

    #[test]
    fn turns_are_capped() {
        let one = "<think>t</think><search>q:l;g</search><information>i</information>";
        let text = one.repeat(6);
        assert_eq!(parse_trajectory(&text).turns.len(), DEFAULT_MAX_TURNS);
    }

    #[test]
    fn escaping() {
        assert_eq!(escape_markers("a <b> c"), "a <b> c");
        assert_eq!(escape_markers("x<answer>y"), "x&lt;answer>y");
    }
}
