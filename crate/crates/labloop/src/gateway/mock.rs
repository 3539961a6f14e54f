//! Deterministic scripted backends for desk-scale verification.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{ChatBackend, ChatRequest, ChatResponse, EmbeddingBackend, EmbeddingVector, Usage};

/// How a rule matches the concatenated request text.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    Substring(String),
    Pattern(String),
}

/// One scripted rule: first match wins.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
}

impl MockRule {
    fn matches(&self, text: &str) -> bool {
        match &self.matcher {
            Matcher::Substring(needle) => text.contains(needle),
            Matcher::Pattern(pattern) => regex::Regex::new(pattern)
                .map(|re| re.is_match(text))
                .unwrap_or(false),
        }
    }
}

/// A scripted chat backend: an ordered rule list evaluated first-match-wins
/// over the concatenated request text, with a default response, plus an
/// append-only call log.
///
/// Responses depend only on request content, so identical request sequences
/// always yield identical response sequences — including across worker
/// interleavings.
pub struct ScriptedMockProgram {
    rules: Vec<MockRule>,
    default_response: String,
    call_log: Mutex<Vec<ChatRequest>>,
}

impl ScriptedMockProgram {
    pub fn new(default_response: impl Into<String>) -> Self {
        Self {
            rules: Vec::new(),
            default_response: default_response.into(),
            call_log: Mutex::new(Vec::new()),
        }
    }

    /// Append a substring rule.
    pub fn rule(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            matcher: Matcher::Substring(needle.into()),
            response: response.into(),
        });
        self
    }

    /// Append a regex rule.
    pub fn pattern_rule(mut self, pattern: impl Into<String>, response: impl Into<String>) -> Self {
        self.rules.push(MockRule {
            matcher: Matcher::Pattern(pattern.into()),
            response: response.into(),
        });
        self
    }

    pub fn with_rules(mut self, rules: Vec<MockRule>) -> Self {
        self.rules.extend(rules);
        self
    }

    /// Resolve a request to its canned response without logging it.
    pub fn respond_to(&self, request_text: &str) -> &str {
        self.rules
            .iter()
            .find(|r| r.matches(request_text))
            .map(|r| r.response.as_str())
            .unwrap_or(self.default_response.as_str())
    }

    pub fn call_count(&self) -> usize {
        self.call_log.lock().expect("call log lock").len()
    }

    /// Snapshot of every request seen so far, in arrival order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.call_log.lock().expect("call log lock").clone()
    }
}

fn token_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

impl ChatBackend for ScriptedMockProgram {
    fn id(&self) -> &str {
        "mock"
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let text = req.concatenated_text();
        let response = self.respond_to(&text).to_string();
        self.call_log.lock().expect("call log lock").push(req.clone());
        Ok(ChatResponse {
            usage: Usage {
                input_tokens: token_count(&text),
                output_tokens: token_count(&response),
            },
            text: response,
            backend_id: "mock".into(),
        })
    }
}

/// Deterministic embedding backend: each lowercase token hashes to a seeded
/// pseudo-random vector; the token vectors are summed and the result scaled
/// to unit L2 norm.
///
/// Identical text always embeds identically, and texts sharing tokens land
/// closer together than unrelated ones, which gives retrieval tests a usable
/// similarity geometry without any model.
pub struct HashEmbedder {
    dimension: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dimension: usize) -> Self {
        Self { dimension, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(token.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        let mut rng = ChaCha8Rng::from_seed(key);
        (0..self.dimension).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }
}

impl EmbeddingBackend for HashEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::Validation("cannot embed empty text".into()));
        }
        let mut acc = vec![0.0f64; self.dimension];
        let mut any = false;
        for token in text.split_whitespace() {
            any = true;
            for (slot, v) in acc.iter_mut().zip(self.token_vector(&token.to_lowercase())) {
                *slot += v;
            }
        }
        if !any {
            // Whitespace-only text still embeds deterministically.
            acc = self.token_vector("");
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in acc.iter_mut() {
                *v /= norm;
            }
        } else {
            acc[0] = 1.0;
        }
        EmbeddingVector::new(acc)
    }
}
