use serde::{Deserialize, Serialize};

use super::{
    escape_markers, parse_search_action, parse_trajectory_bounded, tokenize, ProtocolError, RoutingAction,
    SegmentKind, Trajectory,
};

/// The search emitted by the latest model output, waiting for its information.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingSearch {
    Valid(RoutingAction),
    Invalid(String),
}

/// Routing state of one episode.
///
/// `terminated` holds exactly when an answer was given or `turn_index`
/// reached `max_turns`. Every model output that does not answer consumes a
/// turn, whether or not its search was well formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub question: String,
    pub transcript: String,
    pub history: Trajectory,
    pub turn_index: usize,
    pub max_turns: usize,
    pub terminated: bool,
    pub final_answer: Option<String>,
    pub pending: Option<PendingSearch>,
}

impl EpisodeState {
    pub fn new(question: impl Into<String>, max_turns: usize) -> Self {
        EpisodeState {
            question: question.into(),
            transcript: String::new(),
            history: parse_trajectory_bounded("", max_turns),
            turn_index: 0,
            max_turns,
            terminated: max_turns == 0,
            final_answer: None,
            pending: None,
        }
    }

    /// Appends one model output. `tool_result` answers the search left
    /// pending by the previous call and is spliced in first.
    ///
    /// Output after the first `</search>` or `</answer>` is discarded, the way
    /// a stop sequence would cut generation.
    pub fn advance(&self, model_output: &str, tool_result: Option<&str>) -> Result<EpisodeState, ProtocolError> {
        if self.terminated {
            return Err(ProtocolError::EpisodeAlreadyTerminated);
        }
        let mut next = match tool_result {
            Some(info) => self.deliver(info)?,
            None => {
                let mut s = self.clone();
                s.pending = None;
                s
            }
        };

        let (segments, _) = tokenize(model_output);
        let stop = segments
            .iter()
            .find(|s| matches!(s.kind, SegmentKind::Search | SegmentKind::Answer))
            .map(|s| (s.kind, s.span.1, s.content.clone()));

        let kept = match &stop {
            Some((_, end, _)) => &model_output[..*end],
            None => model_output,
        };
        next.transcript.push_str(kept);

        match stop {
            Some((SegmentKind::Answer, _, content)) => {
                next.final_answer = Some(content.trim().to_string());
                next.terminated = true;
            }
            Some((SegmentKind::Search, _, content)) => {
                next.pending = Some(match parse_search_action(&content) {
                    Ok(action) => PendingSearch::Valid(action),
                    Err(e) => PendingSearch::Invalid(e.to_string()),
                });
                next.turn_index += 1;
            }
            _ => next.turn_index += 1,
        }
        if next.turn_index >= next.max_turns {
            next.terminated = true;
        }
        next.history = parse_trajectory_bounded(&next.transcript, next.max_turns);
        Ok(next)
    }

    /// Splices the information for the pending search into the transcript.
    ///
    /// Allowed after a turn-bound termination so the last executed call is
    /// still recorded; never allowed after an answer.
    pub fn deliver(&self, info: &str) -> Result<EpisodeState, ProtocolError> {
        if self.final_answer.is_some() {
            return Err(ProtocolError::EpisodeAlreadyTerminated);
        }
        if self.pending.is_none() {
            return Err(ProtocolError::NoPendingSearch);
        }
        let mut next = self.clone();
        next.pending = None;
        next.transcript.push_str("<information>");
        next.transcript.push_str(&escape_markers(info));
        next.transcript.push_str("</information>");
        next.history = parse_trajectory_bounded(&next.transcript, next.max_turns);
        Ok(next)
    }

    /// Content of the most recent information segment.
    pub fn last_information(&self) -> Option<&str> {
        self.history.of_kind(SegmentKind::Information).last().map(|s| s.content.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SEARCH: &str = "<think>a</think><graphrag>HippoRAG2</graphrag><think>b</think><llm>Qwen2.5-7B-Instruct</llm><search>q:Qwen2.5-7B-Instruct;HippoRAG2</search>";

    #[test]
    fn valid_search_step() {
        let s = EpisodeState::new("q", 4).advance(SEARCH, None).unwrap();
        assert!(!s.terminated);
        assert_eq!(s.turn_index, 1);
        assert!(matches!(s.pending, Some(PendingSearch::Valid(ref a)) if a.graphrag_id == "HippoRAG2"));
    }

    #[test]
    fn answer_terminates() {
        let s = EpisodeState::new("q", 4)
            .advance(SEARCH, None)
            .unwrap()
            .advance("<think>ok</think><answer>Beijing</answer>", Some("Answer: Beijing."))
            .unwrap();
        assert!(s.terminated);
        assert_eq!(s.final_answer.as_deref(), Some("Beijing"));
        assert_eq!(s.history.turns.len(), 2);
        assert_eq!(s.last_information(), Some("Answer: Beijing."));
        assert_eq!(s.advance("x", None), Err(ProtocolError::EpisodeAlreadyTerminated));
    }

    #[test]
    fn turn_bound_forces_termination() {
        let mut s = EpisodeState::new("q", 4);
        for _ in 0..4 {
            let info = s.pending.as_ref().map(|_| "nothing");
            s = s.advance(SEARCH, info).unwrap();
        }
        assert_eq!(s.turn_index, 4);
        assert!(s.terminated);
        assert!(s.final_answer.is_none());
        // The last executed call can still be recorded.
        let s = s.deliver("late").unwrap();
        assert_eq!(s.history.count(SegmentKind::Information), 4);
        assert!(s.history.turns.len() <= 4);
    }

    #[test]
    fn output_after_stop_is_dropped() {
        let s = EpisodeState::new("q", 4)
            .advance("<think>a</think><answer>x</answer><search>q:l;g</search>", None)
            .unwrap();
        assert_eq!(s.history.count(SegmentKind::Search), 0);
        assert_eq!(s.final_answer.as_deref(), Some("x"));
    }

    #[test]
    fn malformed_search_consumes_turn() {
        let s = EpisodeState::new("q", 4).advance("<think>a</think><search>no separators</search>", None).unwrap();
        assert_eq!(s.turn_index, 1);
        assert!(matches!(s.pending, Some(PendingSearch::Invalid(_))));
        assert!(!s.terminated);
    }

    #[test]
    fn deliver_requires_pending() {
        let s = EpisodeState::new("q", 4);
        assert_eq!(s.deliver("x"), Err(ProtocolError::NoPendingSearch));
    }
}
