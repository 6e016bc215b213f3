use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendError;

/// Generator scale class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Small,
    Medium,
    Large,
}

impl Tier {
    pub const ALL: [Tier; 3] = [Tier::Small, Tier::Medium, Tier::Large];

    pub fn default_cost(self) -> u32 {
        match self {
            Tier::Small => 1,
            Tier::Medium => 2,
            Tier::Large => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Small => "small",
            Tier::Medium => "medium",
            Tier::Large => "large",
        }
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Ok(Tier::Small),
            "medium" => Ok(Tier::Medium),
            "large" => Ok(Tier::Large),
            other => Err(format!("unknown tier '{other}'")),
        }
    }
}

/// A tier together with the routing cost charged for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleTier {
    pub tier: Tier,
    pub cost: u32,
}

impl From<Tier> for ScaleTier {
    fn from(tier: Tier) -> Self {
        ScaleTier { tier, cost: tier.default_cost() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    pub tier: Tier,
    /// Defaults to the tier's cost when absent from the registry file.
    #[serde(default)]
    pub cost: Option<u32>,
    #[serde(default)]
    pub endpoint: Option<String>,
}

impl LlmSpec {
    pub fn new(id: impl Into<String>, tier: Tier) -> Self {
        LlmSpec { id: id.into(), description: String::new(), tier, cost: None, endpoint: None }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    pub fn cost(&self) -> u32 {
        self.cost.unwrap_or_else(|| self.tier.default_cost())
    }

    pub fn scale(&self) -> ScaleTier {
        ScaleTier { tier: self.tier, cost: self.cost() }
    }
}

fn default_top_k() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphRagSpec {
    pub id: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

impl GraphRagSpec {
    pub fn new(id: impl Into<String>) -> Self {
        GraphRagSpec { id: id.into(), description: String::new(), endpoint: None, top_k: default_top_k() }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

/// A new pool member.
#[derive(Debug, Clone, PartialEq)]
pub enum Candidate {
    GraphRag(GraphRagSpec),
    Llm(LlmSpec),
}

impl Candidate {
    pub fn id(&self) -> &str {
        match self {
            Candidate::GraphRag(g) => &g.id,
            Candidate::Llm(l) => &l.id,
        }
    }
}

/// The retrieval and generator pools the router chooses from. Order is
/// significant: policy logits are indexed by position.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BackendRegistry {
    #[serde(default, rename = "graphrag")]
    pub graphrags: Vec<GraphRagSpec>,
    #[serde(default, rename = "llm")]
    pub llms: Vec<LlmSpec>,
}

impl BackendRegistry {
    /// Five graph retrievers and five generators spanning the three tiers.
    pub fn standard() -> Self {
        let graphrags = vec![
            GraphRagSpec::new("HyperGraphRAG")
                .with_description("Hypergraph index over n-ary facts; scores entities and hyperedges by similarity."),
            GraphRagSpec::new("HippoRAG2")
                .with_description("Open-IE knowledge graph of entities, passages and triples; personalized PageRank retrieval."),
            GraphRagSpec::new("RAPTOR")
                .with_description("Tree of recursively clustered summaries; returns node-level or subtree summaries."),
            GraphRagSpec::new("GraphRAG")
                .with_description("Entity graph partitioned into communities; retrieves community summaries."),
            GraphRagSpec::new("LinearRAG")
                .with_description("Lightweight entity/sentence/passage graph built with NER; fast activation-based retrieval."),
        ];
        let llms = vec![
            LlmSpec::new("Qwen2.5-7B-Instruct", Tier::Small).with_description("7B instruction-tuned model."),
            LlmSpec::new("LLaMA-3.1-8B-Instruct", Tier::Small).with_description("8B instruction-tuned dialogue model."),
            LlmSpec::new("LLaMA-3.1-70B-Instruct", Tier::Large).with_description("70B instruction-tuned dialogue model."),
            LlmSpec::new("Ministral3-8B-2512", Tier::Small).with_description("8B reasoning post-trained edge model."),
            LlmSpec::new("Mixtral-8x22B-Instruct", Tier::Medium).with_description("Sparse mixture-of-experts, 39B active parameters."),
        ];
        BackendRegistry { graphrags, llms }
    }

    pub fn graphrag_index(&self, id: &str) -> Option<usize> {
        self.graphrags.iter().position(|g| g.id == id)
    }

    pub fn llm_index(&self, id: &str) -> Option<usize> {
        self.llms.iter().position(|l| l.id == id)
    }

    pub fn graphrag(&self, id: &str) -> Option<&GraphRagSpec> {
        self.graphrags.iter().find(|g| g.id == id)
    }

    pub fn llm(&self, id: &str) -> Option<&LlmSpec> {
        self.llms.iter().find(|l| l.id == id)
    }

    pub fn is_valid_graphrag(&self, id: &str) -> bool {
        self.graphrag(id).is_some()
    }

    pub fn is_valid_llm(&self, id: &str) -> bool {
        self.llm(id).is_some()
    }

    pub fn graphrag_ids(&self) -> Vec<String> {
        self.graphrags.iter().map(|g| g.id.clone()).collect()
    }

    pub fn llm_ids(&self) -> Vec<String> {
        self.llms.iter().map(|l| l.id.clone()).collect()
    }

    pub fn max_cost(&self) -> u32 {
        self.llms.iter().map(LlmSpec::cost).max().unwrap_or(Tier::Large.default_cost())
    }

    /// Appends a candidate. Ids are unique within each pool.
    pub fn register(&mut self, candidate: Candidate) -> Result<(), BackendError> {
        match candidate {
            Candidate::GraphRag(spec) => {
                if self.is_valid_graphrag(&spec.id) {
                    return Err(BackendError::DuplicateCandidate(spec.id));
                }
                self.graphrags.push(spec);
            }
            Candidate::Llm(spec) => {
                if self.is_valid_llm(&spec.id) {
                    return Err(BackendError::DuplicateCandidate(spec.id));
                }
                self.llms.push(spec);
            }
        }
        Ok(())
    }

    pub fn with_candidate(&self, candidate: Candidate) -> Result<BackendRegistry, BackendError> {
        let mut next = self.clone();
        next.register(candidate)?;
        Ok(next)
    }

    /// Rejects duplicate ids after loading from a file.
    pub fn check(&self) -> Result<(), BackendError> {
        for (i, g) in self.graphrags.iter().enumerate() {
            if self.graphrags[..i].iter().any(|o| o.id == g.id) {
                return Err(BackendError::DuplicateCandidate(g.id.clone()));
            }
        }
        for (i, l) in self.llms.iter().enumerate() {
            if self.llms[..i].iter().any(|o| o.id == l.id) {
                return Err(BackendError::DuplicateCandidate(l.id.clone()));
            }
        }
        Ok(())
    }

    /// SHA-256 over the ordered candidate ids.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.graphrags {
            h.update(b"g:");
            h.update(g.id.as_bytes());
            h.update(b"\n");
        }
        for l in &self.llms {
            h.update(b"l:");
            h.update(l.id.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, BackendError> {
        let reg: BackendRegistry = toml::from_str(text).map_err(|e| BackendError::Registry(e.to_string()))?;
        reg.check()?;
        Ok(reg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("registry serializes")
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| BackendError::Registry(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| BackendError::Registry(format!("{}: {e}", path.display())))
    }
}
