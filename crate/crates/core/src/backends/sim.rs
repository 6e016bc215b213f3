//! Scripted simulation world.
//!
//! Each question carries an answerability table: the probability that a
//! generator of a given tier answers correctly when reading a given
//! retriever's evidence, plus direct-inference odds per tier. Draws come
//! from the caller's generator, so outcomes are a pure function of the seed.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendRegistry, Evidence, Generation, Prompt, Query, Tier};

/// What a retriever returns when it holds no relevant evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    #[default]
    Distractor,
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOdds {
    pub graphrag: String,
    pub tier: Tier,
    pub p: f64,
}

fn default_wrong() -> String {
    "unknown".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub answer: String,
    pub evidence: String,
    #[serde(default = "default_wrong")]
    pub wrong_answer: String,
    #[serde(default)]
    pub answerable_by: Vec<PairOdds>,
    /// Direct-inference (no retrieval) success probability per tier.
    #[serde(default)]
    pub direct: BTreeMap<Tier, f64>,
    #[serde(default)]
    pub distractor: Option<String>,
}

impl ScriptEntry {
    pub fn pair_odds(&self, graphrag: &str, tier: Tier) -> f64 {
        self.answerable_by.iter().find(|o| o.graphrag == graphrag && o.tier == tier).map_or(0.0, |o| o.p)
    }

    pub fn retrievable_by(&self, graphrag: &str) -> bool {
        self.answerable_by.iter().any(|o| o.graphrag == graphrag && o.p > 0.0)
    }

    pub fn direct_odds(&self, tier: Tier) -> f64 {
        self.direct.get(&tier).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldScript {
    #[serde(default)]
    pub failure_mode: FailureMode,
    pub questions: BTreeMap<String, ScriptEntry>,
}

impl WorldScript {
    /// Probabilities must lie in [0, 1] and every retriever must be registered.
    pub fn validate(&self, registry: &BackendRegistry) -> Result<(), BackendError> {
        for (qid, e) in &self.questions {
            for o in &e.answerable_by {
                if !(0.0..=1.0).contains(&o.p) {
                    return Err(BackendError::World(format!("{qid}: probability {} out of range", o.p)));
                }
                if !registry.is_valid_graphrag(&o.graphrag) {
                    return Err(BackendError::World(format!("{qid}: unknown graphrag '{}'", o.graphrag)));
                }
            }
            if let Some(p) = e.direct.values().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(BackendError::World(format!("{qid}: probability {p} out of range")));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::World(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::World(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let text = serde_json::to_string_pretty(self).expect("world serializes");
        std::fs::write(path, text).map_err(|e| BackendError::World(format!("{}: {e}", path.display())))
    }
}

pub const INSUFFICIENT_TEXT: &str =
    "Explanation: The retrieved context does not settle this question. Another knowledge base or model may be needed.";

/// Information text for a successful generation.
pub fn answer_text(answer: &str, explanation: &str) -> String {
    format!("Answer: {answer}. Explanation: {explanation}")
}

/// Pulls the answer out of `Answer: <x>. Explanation: ...` style text.
pub fn extract_answer(info: &str) -> Option<String> {
    let start = info.find("Answer:")? + "Answer:".len();
    let rest = &info[start..];
    let end = rest.find(". Explanation:").or_else(|| rest.find("\nExplanation:")).unwrap_or(rest.len());
    let answer = rest[..end].trim().trim_end_matches('.').trim();
    (!answer.is_empty()).then(|| answer.to_string())
}

#[derive(Debug, Clone)]
pub struct SimWorld {
    script: WorldScript,
    registry: BackendRegistry,
}

impl SimWorld {
    pub fn new(script: WorldScript, registry: BackendRegistry) -> Result<Self, BackendError> {
        script.validate(&registry)?;
        Ok(SimWorld { script, registry })
    }

    pub fn script(&self) -> &WorldScript {
        &self.script
    }

    pub fn registry(&self) -> &BackendRegistry {
        &self.registry
    }

    /// Swaps in an extended registry; the script is unchanged.
    pub fn set_registry(&mut self, registry: BackendRegistry) -> Result<(), BackendError> {
        self.script.validate(&registry)?;
        self.registry = registry;
        Ok(())
    }

    fn entry(&self, question_id: &str) -> Result<&ScriptEntry, BackendError> {
        self.script.questions.get(question_id).ok_or_else(|| BackendError::UnknownQuestion(question_id.to_string()))
    }

    /// Probability that the (graphrag, llm) pair answers correctly.
    pub fn success_odds(&self, question_id: &str, graphrag: &str, llm: &str) -> Result<f64, BackendError> {
        let tier = self.registry.llm(llm).ok_or_else(|| BackendError::UnknownLlm(llm.to_string()))?.tier;
        Ok(self.entry(question_id)?.pair_odds(graphrag, tier))
    }
}

impl Backend for SimWorld {
    fn retrieve(&self, graphrag_id: &str, query: Query<'_>) -> Result<Evidence, BackendError> {
        if !self.registry.is_valid_graphrag(graphrag_id) {
            return Err(BackendError::UnknownGraphRag(graphrag_id.to_string()));
        }
        let entry = self.entry(query.question_id)?;
        let text = if entry.retrievable_by(graphrag_id) {
            entry.evidence.clone()
        } else {
            match self.script.failure_mode {
                FailureMode::Empty => String::new(),
                FailureMode::Distractor => entry
                    .distractor
                    .clone()
                    .unwrap_or_else(|| format!("Passages retrieved by {graphrag_id} mention related entities but not the asked fact.")),
            }
        };
        Ok(Evidence { graphrag_id: graphrag_id.to_string(), text })
    }

    fn generate(&self, llm_id: &str, prompt: Prompt<'_>, rng: &mut dyn RngCore) -> Result<Generation, BackendError> {
        let llm = self.registry.llm(llm_id).ok_or_else(|| BackendError::UnknownLlm(llm_id.to_string()))?;
        let entry = self.entry(prompt.query.question_id)?;
        let p = match prompt.evidence {
            Some(ev) => entry.pair_odds(&ev.graphrag_id, llm.tier),
            None => entry.direct_odds(llm.tier),
        };
        // Always consume one draw so the stream position does not depend on p.
        let hit = rng.gen::<f64>() < p;
        let text = match (prompt.evidence, hit) {
            (Some(_), true) => answer_text(&entry.answer, &entry.evidence),
            (Some(_), false) => INSUFFICIENT_TEXT.to_string(),
            (None, true) => entry.answer.clone(),
            (None, false) => entry.wrong_answer.clone(),
        };
        Ok(Generation { text, truncated: false })
    }
}
