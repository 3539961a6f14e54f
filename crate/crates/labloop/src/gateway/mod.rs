//! Model gateway: the single abstraction through which every chat-style
//! generation and embedding request flows.
//!
//! Two backends implement the same traits — a live HTTP backend
//! ([`http::HttpChatBackend`]) and a deterministic scripted mock
//! ([`ScriptedMockProgram`]) — so the whole pipeline runs unchanged against
//! either. Every successful call is appended to a [`Transcript`].

mod http;
mod mock;
mod transcript;

pub use http::{HttpChatBackend, HttpEmbeddingBackend};
pub use mock::{HashEmbedder, MockRule, ScriptedMockProgram};
pub use transcript::{Transcript, TranscriptEntry, TranscriptRequest, TranscriptResponse};

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Who authored a chat message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub text: String,
}

/// Sampling settings for one generation call.
///
/// The defaults here are deployment configuration, not claims about any
/// particular model's behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_output_tokens: 4096,
            seed: None,
        }
    }
}

/// One chat-completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    #[serde(default)]
    pub params: GenerationParams,
}

impl ChatRequest {
    /// Start a request from a system prompt.
    pub fn system(text: impl Into<String>) -> Self {
        Self {
            messages: vec![Message {
                role: Role::System,
                text: text.into(),
            }],
            params: GenerationParams::default(),
        }
    }

    /// Start a request from a bare user message.
    pub fn user(text: impl Into<String>) -> Self {
        Self {
            messages: vec![Message {
                role: Role::User,
                text: text.into(),
            }],
            params: GenerationParams::default(),
        }
    }

    pub fn with_user(mut self, text: impl Into<String>) -> Self {
        self.messages.push(Message {
            role: Role::User,
            text: text.into(),
        });
        self
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    /// All message texts joined in order; the surface mock rules match on.
    pub fn concatenated_text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn validate(&self) -> Result<()> {
        if self.messages.is_empty() {
            return Err(Error::Validation("chat request has no messages".into()));
        }
        if self.messages[0].role == Role::Assistant {
            return Err(Error::Validation(
                "first message must be a system or user message".into(),
            ));
        }
        if self.params.temperature < 0.0 || !self.params.temperature.is_finite() {
            return Err(Error::Validation("temperature must be a finite value >= 0".into()));
        }
        if self.params.max_output_tokens == 0 {
            return Err(Error::Validation("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
    pub backend_id: String,
}

/// A fixed-length embedding; all values finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("embedding must not be empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains a non-finite value".into()));
        }
        Ok(Self { values })
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity with `other`; zero-norm inputs map to 0.0.
    pub fn cosine_similarity(&self, other: &EmbeddingVector) -> Result<f64> {
        if self.dimension() != other.dimension() {
            return Err(Error::Configuration(format!(
                "embedding dimension mismatch: {} vs {}",
                self.dimension(),
                other.dimension()
            )));
        }
        let dot: f64 = self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum();
        let denom = self.l2_norm() * other.l2_norm();
        if denom == 0.0 {
            return Ok(0.0);
        }
        Ok(dot / denom)
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        EmbeddingVector::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

/// Chat-completion backend.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse>;
}

/// Embedding backend with a fixed output dimension.
pub trait EmbeddingBackend: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Retry settings for transport-level failures.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(100),
        }
    }
}

impl RetryPolicy {
    /// Run `op`, retrying on [`Error::Retryable`] with exponential backoff.
    /// The error surfaced after exhaustion carries the total attempt count.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for attempt in 0..attempts {
            match op() {
                Ok(v) => return Ok(v),
                Err(Error::Retryable { message, .. }) => {
                    last = Some(message);
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.base_delay * 2u32.pow(attempt));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(Error::Retryable {
            attempts,
            message: last.unwrap_or_else(|| "transport failure".into()),
        })
    }
}

/// Routes generation calls to per-role backends, embeds through a single
/// embedding backend, and records every successful call in the transcript.
///
/// Roles name the calling agent function ("ideation", "judge", "code", ...);
/// a role with no dedicated backend falls back to the default backend.
pub struct ModelGateway {
    default_chat: Arc<dyn ChatBackend>,
    chat_by_role: BTreeMap<String, Arc<dyn ChatBackend>>,
    embedder: Arc<dyn EmbeddingBackend>,
    transcript: Transcript,
    retry: RetryPolicy,
}

impl ModelGateway {
    pub fn new(default_chat: Arc<dyn ChatBackend>, embedder: Arc<dyn EmbeddingBackend>) -> Self {
        Self {
            default_chat,
            chat_by_role: BTreeMap::new(),
            embedder,
            transcript: Transcript::in_memory(),
            retry: RetryPolicy::default(),
        }
    }

    /// Register a dedicated backend for one caller role.
    pub fn with_role_backend(mut self, role: impl Into<String>, backend: Arc<dyn ChatBackend>) -> Self {
        self.chat_by_role.insert(role.into(), backend);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Mirror all transcript appends into a JSON Lines file.
    pub fn with_transcript_sink(self, path: impl Into<std::path::PathBuf>) -> Result<Self> {
        self.transcript.set_sink(path.into())?;
        Ok(self)
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn embedding_dimension(&self) -> usize {
        self.embedder.dimension()
    }

    fn backend_for(&self, role: &str) -> &Arc<dyn ChatBackend> {
        self.chat_by_role.get(role).unwrap_or(&self.default_chat)
    }

    /// Generate a completion on behalf of `caller`, with retries, and record
    /// the exchange.
    pub fn generate(&self, caller: &str, req: &ChatRequest) -> Result<ChatResponse> {
        req.validate()?;
        let backend = self.backend_for(caller);
        let resp = self.retry.run(|| backend.generate(req))?;
        self.transcript.record_chat(caller, req, &resp)?;
        Ok(resp)
    }

    /// Embed `text` on behalf of `caller` and record the exchange.
    pub fn embed(&self, caller: &str, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::Validation("cannot embed empty text".into()));
        }
        let vector = self.retry.run(|| self.embedder.embed(text))?;
        self.transcript.record_embedding(caller, text, &vector)?;
        Ok(vector)
    }
}
