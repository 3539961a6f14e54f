//! Live HTTP backends speaking an OpenAI-compatible JSON wire format.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gateway::{
    ChatBackend, ChatRequest, ChatResponse, EmbeddingBackend, EmbeddingVector, Role, Usage,
};

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

fn build_client(timeout: Duration) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| Error::Configuration(format!("http client: {e}")))
}

fn post_json(
    client: &reqwest::blocking::Client,
    url: &str,
    headers: &[(String, String)],
    body: &serde_json::Value,
) -> Result<serde_json::Value> {
    let mut req = client.post(url).json(body);
    for (name, value) in headers {
        req = req.header(name, value);
    }
    let resp = req.send().map_err(|e| Error::Retryable {
        attempts: 1,
        message: format!("POST {url}: {e}"),
    })?;
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().unwrap_or_default();
        return Err(Error::Retryable {
            attempts: 1,
            message: format!("POST {url}: HTTP {status}: {body}"),
        });
    }
    resp.json()
        .map_err(|e| Error::Protocol(format!("response from {url} is not JSON: {e}")))
}

/// Chat-completion client for one configured endpoint and model.
pub struct HttpChatBackend {
    id: String,
    url: String,
    model: String,
    headers: Vec<(String, String)>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireChatChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireChatChoice {
    message: WireChatChoiceMessage,
}

#[derive(Deserialize, Default)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

#[derive(Deserialize)]
struct WireChatResponse {
    choices: Vec<WireChatChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

impl HttpChatBackend {
    pub fn new(url: impl Into<String>, model: impl Into<String>) -> Result<Self> {
        let model = model.into();
        Ok(Self {
            id: format!("http:{model}"),
            url: url.into(),
            model,
            headers: Vec::new(),
            client: build_client(Duration::from_secs(120))?,
        })
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }

    pub fn with_bearer_token(self, token: &str) -> Self {
        self.with_header("authorization", format!("Bearer {token}"))
    }
}

impl ChatBackend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, req: &ChatRequest) -> Result<ChatResponse> {
        let mut body = json!({
            "model": self.model,
            "messages": req.messages.iter().map(|m| json!({
                "role": role_name(m.role),
                "content": m.text,
            })).collect::<Vec<_>>(),
            "temperature": req.params.temperature,
            "max_tokens": req.params.max_output_tokens,
        });
        if let Some(seed) = req.params.seed {
            body["seed"] = json!(seed);
        }
        let value = post_json(&self.client, &self.url, &self.headers, &body)?;
        let wire: WireChatResponse = serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("malformed chat payload: {e}")))?;
        let text = wire
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| Error::Protocol("chat payload has no message content".into()))?;
        if text.is_empty() {
            return Err(Error::Protocol("chat payload has empty message content".into()));
        }
        let usage = wire.usage.unwrap_or_default();
        Ok(ChatResponse {
            text,
            usage: Usage {
                input_tokens: usage.prompt_tokens,
                output_tokens: usage.completion_tokens,
            },
            backend_id: self.id.clone(),
        })
    }
}

/// Embedding client for one configured endpoint and model.
pub struct HttpEmbeddingBackend {
    url: String,
    model: String,
    dimension: usize,
    headers: Vec<(String, String)>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct WireEmbeddingRow {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct WireEmbeddingResponse {
    data: Vec<WireEmbeddingRow>,
}

impl HttpEmbeddingBackend {
    pub fn new(
        url: impl Into<String>,
        model: impl Into<String>,
        dimension: usize,
    ) -> Result<Self> {
        Ok(Self {
            url: url.into(),
            model: model.into(),
            dimension,
            headers: Vec::new(),
            client: build_client(Duration::from_secs(60))?,
        })
    }

    pub fn with_header(mut self, name: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.push((name.into(), value.into()));
        self
    }
}

impl EmbeddingBackend for HttpEmbeddingBackend {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::Validation("cannot embed empty text".into()));
        }
        let body = json!({ "model": self.model, "input": text });
        let value = post_json(&self.client, &self.url, &self.headers, &body)?;
        let wire: WireEmbeddingResponse = serde_json::from_value(value)
            .map_err(|e| Error::Protocol(format!("malformed embedding payload: {e}")))?;
        let row = wire
            .data
            .into_iter()
            .next()
            .ok_or_else(|| Error::Protocol("embedding payload has no rows".into()))?;
        if row.embedding.len() != self.dimension {
            return Err(Error::Configuration(format!(
                "embedding dimension mismatch: backend returned {}, configured {}",
                row.embedding.len(),
                self.dimension
            )));
        }
        EmbeddingVector::new(row.embedding)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    /// One-shot HTTP responder for wire-format tests.
    fn serve_once(body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 65536];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{}",
                    body.len(),
                    body
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    #[test]
    fn chat_backend_parses_wire_format() {
        let url = serve_once(
            r#"{"choices":[{"message":{"content":"hello"}}],"usage":{"prompt_tokens":3,"completion_tokens":1}}"#,
        );
        let backend = HttpChatBackend::new(url, "test-model").unwrap();
        let resp = backend.generate(&ChatRequest::user("hi")).unwrap();
        assert_eq!(resp.text, "hello");
        assert_eq!(resp.usage.input_tokens, 3);
        assert_eq!(resp.backend_id, "http:test-model");
    }

    #[test]
    fn malformed_payload_is_protocol_error() {
        let url = serve_once(r#"{"choices":[]}"#);
        let backend = HttpChatBackend::new(url, "m").unwrap();
        assert!(matches!(
            backend.generate(&ChatRequest::user("hi")),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_retryable() {
        // Port 9 (discard) on localhost is almost certainly closed.
        let backend = HttpChatBackend::new("http://127.0.0.1:9/none", "m").unwrap();
        assert!(matches!(
            backend.generate(&ChatRequest::user("hi")),
            Err(Error::Retryable { .. })
        ));
    }

    #[test]
    fn embedding_backend_checks_dimension() {
        let url = serve_once(r#"{"data":[{"embedding":[0.1,0.2,0.3]}]}"#);
        let backend = HttpEmbeddingBackend::new(url, "emb", 4).unwrap();
        assert!(matches!(
            backend.embed("text"),
            Err(Error::Configuration(_))
        ));
    }

    #[test]
    fn embedding_backend_parses_vector() {
        let url = serve_once(r#"{"data":[{"embedding":[0.1,0.2,0.3]}]}"#);
        let backend = HttpEmbeddingBackend::new(url, "emb", 3).unwrap();
        let v = backend.embed("text").unwrap();
        assert_eq!(v.values(), &[0.1, 0.2, 0.3]);
    }
}
