//! Request/response transcript: one JSON Lines record per successful call.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{ChatRequest, ChatResponse, EmbeddingVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptRequest {
    Chat(ChatRequest),
    Embed { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptResponse {
    Chat(ChatResponse),
    Embedding(EmbeddingVector),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub timestamp: DateTime<Utc>,
    pub caller: String,
    pub request: TranscriptRequest,
    pub response: TranscriptResponse,
}

impl TranscriptEntry {
    /// Concatenated prompt text for chat entries, the input text for embeds.
    pub fn request_text(&self) -> String {
        match &self.request {
            TranscriptRequest::Chat(req) => req.concatenated_text(),
            TranscriptRequest::Embed { text } => text.clone(),
        }
    }
}

struct Inner {
    entries: Vec<TranscriptEntry>,
    sink: Option<(PathBuf, File)>,
}

/// Shared, append-serialized transcript. Clones share the same state, so a
/// gateway and a test can both hold a handle.
#[derive(Clone)]
pub struct Transcript {
    inner: Arc<Mutex<Inner>>,
}

impl Transcript {
    pub fn in_memory() -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                entries: Vec::new(),
                sink: None,
            })),
        }
    }

    /// Mirror future appends into a JSONL file (created or truncated now).
    pub fn set_sink(&self, path: PathBuf) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        self.inner.lock().expect("transcript lock").sink = Some((path, file));
        Ok(())
    }

    fn append(&self, entry: TranscriptEntry) -> Result<()> {
        let mut inner = self.inner.lock().expect("transcript lock");
        if let Some((path, file)) = inner.sink.as_mut() {
            let line = serde_json::to_string(&entry)
                .map_err(|e| Error::Storage(format!("transcript encode: {e}")))?;
            writeln!(file, "{line}").map_err(|e| {
                Error::Storage(format!("transcript write {}: {e}", path.display()))
            })?;
            file.flush()
                .map_err(|e| Error::Storage(format!("transcript flush: {e}")))?;
        }
        inner.entries.push(entry);
        Ok(())
    }

    pub fn record_chat(&self, caller: &str, req: &ChatRequest, resp: &ChatResponse) -> Result<()> {
        self.append(TranscriptEntry {
            timestamp: Utc::now(),
            caller: caller.to_string(),
            request: TranscriptRequest::Chat(req.clone()),
            response: TranscriptResponse::Chat(resp.clone()),
        })
    }

    pub fn record_embedding(
        &self,
        caller: &str,
        text: &str,
        vector: &EmbeddingVector,
    ) -> Result<()> {
        self.append(TranscriptEntry {
            timestamp: Utc::now(),
            caller: caller.to_string(),
            request: TranscriptRequest::Embed {
                text: text.to_string(),
            },
            response: TranscriptResponse::Embedding(vector.clone()),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("transcript lock").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Snapshot of all entries in append order.
    pub fn entries(&self) -> Vec<TranscriptEntry> {
        self.inner.lock().expect("transcript lock").entries.clone()
    }

    /// Chat entries whose caller matches, in order.
    pub fn chat_entries(&self, caller: &str) -> Vec<TranscriptEntry> {
        self.entries()
            .into_iter()
            .filter(|e| e.caller == caller && matches!(e.request, TranscriptRequest::Chat(_)))
            .collect()
    }

    /// Load a persisted transcript; a truncated line is a parse error naming
    /// its line number.
    pub fn load(path: &std::path::Path) -> Result<Vec<TranscriptEntry>> {
        let file = File::open(path)?;
        let reader = BufReader::new(file);
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: TranscriptEntry =
                serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: e.to_string(),
                })?;
            entries.push(entry);
        }
        Ok(entries)
    }
}
