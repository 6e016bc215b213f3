//! Execution of routing actions against retrieval and generator backends.
//!
//! A routing action composes one retrieval call and one generation call:
//! the generator reads the evidence the retriever returned for the query.

mod http;
mod registry;
mod sim;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::RoutingAction;

pub use http::{ChatMessage, ChatRequest, ChatResponse, HttpBackend, HttpConfig, RetrievalRequest, RetrievalResponse};
pub use registry::{BackendRegistry, Candidate, GraphRagSpec, LlmSpec, ScaleTier, Tier};
pub use sim::{answer_text, extract_answer, FailureMode, PairOdds, ScriptEntry, SimWorld, WorldScript, INSUFFICIENT_TEXT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("unknown graphrag '{0}'")]
    UnknownGraphRag(String),
    #[error("unknown llm '{0}'")]
    UnknownLlm(String),
    #[error("question '{0}' is not in the world script")]
    UnknownQuestion(String),
    #[error("backend unavailable at {endpoint} after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    BackendUnavailable { endpoint: String, attempts: Vec<String> },
    #[error("backend returned status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("candidate '{0}' has no endpoint configured")]
    NoEndpoint(String),
    #[error("duplicate candidate '{0}'")]
    DuplicateCandidate(String),
    #[error("registry: {0}")]
    Registry(String),
    #[error("world script: {0}")]
    World(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// The question a backend call is about.
#[derive(Debug, Clone, Copy)]
pub struct Query<'a> {
    pub question_id: &'a str,
    pub text: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub graphrag_id: String,
    pub text: String,
}

/// Input to a generator: the question plus retrieved evidence, or no
/// evidence at all for direct inference.
#[derive(Debug, Clone, Copy)]
pub struct Prompt<'a> {
    pub query: Query<'a>,
    pub evidence: Option<&'a Evidence>,
}

impl Prompt<'_> {
    /// Plain-text rendering sent to real chat endpoints.
    pub fn render(&self) -> String {
        match self.evidence {
            Some(ev) => format!(
                "Context:\n{}\n\nQuestion: {}\n\nAnswer using the context. Reply as \"Answer: <answer>. Explanation: <reason>\"; \
                 if the context is insufficient, say so.",
                ev.text, self.query.text
            ),
            None => format!("Question: {}\n\nReply with the answer only.", self.query.text),
        }
    }
}

/// Generated text; `truncated` flags a soft cut at the response length cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Generation {
    pub text: String,
    pub truncated: bool,
}

pub trait Backend: Send + Sync {
    fn retrieve(&self, graphrag_id: &str, query: Query<'_>) -> Result<Evidence, BackendError>;

    fn generate(&self, llm_id: &str, prompt: Prompt<'_>, rng: &mut dyn RngCore) -> Result<Generation, BackendError>;
}

/// Runs retrieval then generation for one action and returns the text the
/// protocol wraps in an information segment.
pub fn execute_action(
    action: &RoutingAction,
    question_id: &str,
    registry: &BackendRegistry,
    world: &dyn Backend,
    rng: &mut dyn RngCore,
) -> Result<Generation, BackendError> {
    if !registry.is_valid_graphrag(&action.graphrag_id) {
        return Err(BackendError::UnknownGraphRag(action.graphrag_id.clone()));
    }
    if !registry.is_valid_llm(&action.llm_id) {
        return Err(BackendError::UnknownLlm(action.llm_id.clone()));
    }
    let query = Query { question_id, text: &action.query };
    let evidence = world.retrieve(&action.graphrag_id, query)?;
    world.generate(&action.llm_id, Prompt { query, evidence: Some(&evidence) }, rng)
}

/// Caps a response at `max_tokens` whitespace-separated tokens.
pub fn cap_length(text: &str, max_tokens: usize) -> Generation {
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            in_token = false;
        } else if !in_token {
            in_token = true;
            seen += 1;
            if seen > max_tokens {
                return Generation { text: text[..i].trim_end().to_string(), truncated: true };
            }
        }
    }
    Generation { text: text.to_string(), truncated: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn length_cap() {
        assert_eq!(cap_length("a b c", 3), Generation { text: "a b c".into(), truncated: false });
        assert_eq!(cap_length("a b  c d", 3), Generation { text: "a b  c".into(), truncated: true });
        assert_eq!(cap_length("", 0).truncated, false);
    }
}
