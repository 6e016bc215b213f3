//! Blocking HTTP backend for chat-completion generators and retrieval services.
//!
//! Generation request (`POST <llm endpoint>`):
//! `{"model": <llm id>, "messages": [{"role": "user", "content": <prompt>}], "max_tokens": <cap>}`
//! and the reply is read from `choices[0].message.content`.
//!
//! Retrieval request (`POST <graphrag endpoint>`): `{"query": <text>, "top_k": <k>}`
//! answered by `{"passages": [<text>, ...]}`; passages are joined with newlines.

use std::collections::HashMap;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{cap_length, Backend, BackendError, BackendRegistry, Evidence, Generation, Prompt, Query};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub timeout_ms: u64,
    /// Total attempts per request, including the first.
    pub max_attempts: u32,
    pub backoff_ms: u64,
    pub max_in_flight: usize,
    /// Minimum spacing between calls to one endpoint.
    pub min_interval_ms: u64,
    pub max_response_tokens: usize,
    /// Environment variable holding the bearer credential.
    pub api_key_env: String,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            timeout_ms: 30_000,
            max_attempts: 3,
            backoff_ms: 250,
            max_in_flight: 8,
            min_interval_ms: 0,
            max_response_tokens: 600,
            api_key_env: "TIERROUTE_API_KEY".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub max_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatChoice {
    pub message: ChatMessage,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<ChatChoice>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalRequest {
    pub query: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetrievalResponse {
    pub passages: Vec<String>,
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Gate { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    registry: BackendRegistry,
    config: HttpConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
    last_call: Mutex<HashMap<String, Instant>>,
}

impl HttpBackend {
    pub fn new(registry: BackendRegistry, config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Malformed(format!("http client: {e}")))?;
        Ok(HttpBackend {
            gate: Gate::new(config.max_in_flight),
            registry,
            config,
            client,
            last_call: Mutex::new(HashMap::new()),
        })
    }

    fn pace(&self, endpoint: &str) {
        if self.config.min_interval_ms == 0 {
            return;
        }
        let interval = Duration::from_millis(self.config.min_interval_ms);
        let wait = {
            let mut last = self.last_call.lock().expect("pace lock");
            let now = Instant::now();
            let next = last.get(endpoint).map_or(now, |&t| (t + interval).max(now));
            last.insert(endpoint.to_string(), next);
            next - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }

    /// POSTs `body` with bounded retries on transport errors, 429 and 5xx.
    /// Other statuses are returned immediately with the body verbatim.
    fn post_json<B: Serialize, R: DeserializeOwned>(&self, endpoint: &str, body: &B) -> Result<R, BackendError> {
        let _permit = self.gate.acquire();
        let key = std::env::var(&self.config.api_key_env).ok().filter(|k| !k.is_empty());
        let attempts_cap = self.config.max_attempts.max(1);
        let mut log = Vec::new();

        for attempt in 1..=attempts_cap {
            self.pace(endpoint);
            let mut req = self.client.post(endpoint).json(body);
            if let Some(key) = &key {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Err(e) => {
                    let kind = if e.is_timeout() { "timeout" } else { "transport error" };
                    log.push(format!("attempt {attempt}: {kind}"));
                    debug!(endpoint, attempt, "request failed: {kind}");
                }
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let text = resp.text().map_err(|e| BackendError::Malformed(e.to_string()))?;
                        return serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()));
                    }
                    let body = resp.text().unwrap_or_default();
                    if status.is_server_error() || status.as_u16() == 429 {
                        log.push(format!("attempt {attempt}: status {}", status.as_u16()));
                        debug!(endpoint, attempt, status = status.as_u16(), "retryable status");
                    } else {
                        return Err(BackendError::Http { status: status.as_u16(), body });
                    }
                }
            }
            if attempt < attempts_cap && self.config.backoff_ms > 0 {
                std::thread::sleep(Duration::from_millis(self.config.backoff_ms << (attempt - 1).min(6)));
            }
        }
        warn!(endpoint, attempts = log.len(), "backend unavailable");
        Err(BackendError::BackendUnavailable { endpoint: endpoint.to_string(), attempts: log })
    }
}

impl Backend for HttpBackend {
    fn retrieve(&self, graphrag_id: &str, query: Query<'_>) -> Result<Evidence, BackendError> {
        let spec = self.registry.graphrag(graphrag_id).ok_or_else(|| BackendError::UnknownGraphRag(graphrag_id.to_string()))?;
        let endpoint = spec.endpoint.as_deref().ok_or_else(|| BackendError::NoEndpoint(graphrag_id.to_string()))?;
        let resp: RetrievalResponse =
            self.post_json(endpoint, &RetrievalRequest { query: query.text.to_string(), top_k: spec.top_k })?;
        let text = resp.passages.into_iter().take(spec.top_k).collect::<Vec<_>>().join("\n");
        Ok(Evidence { graphrag_id: graphrag_id.to_string(), text })
    }

    fn generate(&self, llm_id: &str, prompt: Prompt<'_>, _rng: &mut dyn RngCore) -> Result<Generation, BackendError> {
        let spec = self.registry.llm(llm_id).ok_or_else(|| BackendError::UnknownLlm(llm_id.to_string()))?;
        let endpoint = spec.endpoint.as_deref().ok_or_else(|| BackendError::NoEndpoint(llm_id.to_string()))?;
        let req = ChatRequest {
            model: llm_id.to_string(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.render() }],
            max_tokens: self.config.max_response_tokens,
        };
        let resp: ChatResponse = self.post_json(endpoint, &req)?;
        let text = resp
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in response".into()))?;
        Ok(cap_length(&text, self.config.max_response_tokens))
    }
}
