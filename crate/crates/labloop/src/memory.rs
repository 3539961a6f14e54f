//! Persistent vector memories with cosine top-k retrieval.
//!
//! Two stores exist per deployment: the ideation store holds distilled
//! research directions and recorded failures; the experimentation store holds
//! reusable data-processing and model-training strategies. Both persist as
//! JSON Lines — one item per line, embedding inline as a real array — which
//! keeps them append-friendly and diffable.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gateway::{EmbeddingBackend, EmbeddingVector};
use crate::text::normalize;

/// Which store an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StoreName {
    Ideation,
    Experimentation,
}

impl StoreName {
    /// Conventional file name under the state directory.
    pub fn file_name(self) -> &'static str {
        match self {
            StoreName::Ideation => "ideation_memory.jsonl",
            StoreName::Experimentation => "experimentation_memory.jsonl",
        }
    }
}

impl fmt::Display for StoreName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoreName::Ideation => write!(f, "ideation"),
            StoreName::Experimentation => write!(f, "experimentation"),
        }
    }
}

/// What kind of knowledge an item carries. The kind pins the item to exactly
/// one store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MemoryKind {
    IdeationDirection,
    IdeationFailure,
    ExperimentDataStrategy,
    ExperimentTrainingStrategy,
}

impl MemoryKind {
    pub fn store(self) -> StoreName {
        match self {
            MemoryKind::IdeationDirection | MemoryKind::IdeationFailure => StoreName::Ideation,
            MemoryKind::ExperimentDataStrategy | MemoryKind::ExperimentTrainingStrategy => {
                StoreName::Experimentation
            }
        }
    }
}

/// Which evolution produced an item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolutionSourceTag {
    IdeaDirection,
    IdeaValidation,
    ExperimentStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub run_id: String,
    pub source: EvolutionSourceTag,
}

/// One distilled strategy or direction, with its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryItem {
    pub id: String,
    pub kind: MemoryKind,
    pub text: String,
    pub embedding: EmbeddingVector,
    pub provenance: Provenance,
    pub created_at: DateTime<Utc>,
}

impl MemoryItem {
    pub fn new(
        kind: MemoryKind,
        text: impl Into<String>,
        embedding: EmbeddingVector,
        provenance: Provenance,
    ) -> Result<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Validation("memory item text must be non-empty".into()));
        }
        Ok(Self {
            id: content_id(&text),
            kind,
            text,
            embedding,
            provenance,
            created_at: Utc::now(),
        })
    }
}

/// Stable, content-derived item id.
fn content_id(text: &str) -> String {
    let digest = Sha256::digest(normalize(text).as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("mem-{hex}")
}

/// One retrieval hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub item: MemoryItem,
    pub similarity: f64,
}

/// Top-k retrieval result, sorted by descending similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub items: Vec<Retrieved>,
    pub query_text: String,
}

impl RetrievedContext {
    pub fn empty(query_text: impl Into<String>) -> Self {
        Self {
            items: Vec::new(),
            query_text: query_text.into(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn texts(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|r| r.item.text.as_str())
    }
}

/// An in-memory view of one persistent store.
///
/// Reads can be shared freely; writes go through `update` and are expected to
/// be serialized by the owner (one writer per store).
pub struct MemoryStore {
    name: StoreName,
    dimension: usize,
    items: Vec<MemoryItem>,
    normalized_texts: BTreeSet<String>,
}

impl MemoryStore {
    pub fn new(name: StoreName, dimension: usize) -> Self {
        Self {
            name,
            dimension,
            items: Vec::new(),
            normalized_texts: BTreeSet::new(),
        }
    }

    pub fn name(&self) -> StoreName {
        self.name
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[MemoryItem] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&MemoryItem> {
        self.items.iter().find(|i| i.id == id)
    }

    /// Top-k by cosine similarity against a pre-computed query embedding.
    ///
    /// Ties break by earlier `created_at`, then id, so rankings are stable
    /// across runs.
    pub fn top_k(
        &self,
        query_embedding: &EmbeddingVector,
        query_text: &str,
        k: usize,
    ) -> Result<RetrievedContext> {
        if k == 0 {
            return Err(Error::Validation("retrieval k must be >= 1".into()));
        }
        if query_embedding.dimension() != self.dimension {
            return Err(Error::Configuration(format!(
                "query embedding dimension {} does not match store dimension {}",
                query_embedding.dimension(),
                self.dimension
            )));
        }
        let mut scored: Vec<Retrieved> = self
            .items
            .iter()
            .map(|item| {
                Ok(Retrieved {
                    similarity: item.embedding.cosine_similarity(query_embedding)?,
                    item: item.clone(),
                })
            })
            .collect::<Result<_>>()?;
        scored.sort_by(|a, b| {
            b.similarity
                .total_cmp(&a.similarity)
                .then_with(|| a.item.created_at.cmp(&b.item.created_at))
                .then_with(|| a.item.id.cmp(&b.item.id))
        });
        scored.truncate(k);
        Ok(RetrievedContext {
            items: scored,
            query_text: query_text.to_string(),
        })
    }

    /// Embed the query through `embedder` and retrieve top-k.
    pub fn retrieve(
        &self,
        embedder: &dyn EmbeddingBackend,
        query: &str,
        k: usize,
    ) -> Result<RetrievedContext> {
        if query.is_empty() {
            return Err(Error::Validation("retrieval query must be non-empty".into()));
        }
        let embedding = embedder.embed(query)?;
        self.top_k(&embedding, query, k)
    }

    /// Append items, skipping duplicates by normalized text. Returns how many
    /// were actually inserted.
    pub fn update(&mut self, new_items: Vec<MemoryItem>) -> Result<usize> {
        for item in &new_items {
            if item.kind.store() != self.name {
                return Err(Error::Validation(format!(
                    "item kind {:?} does not belong in the {} store",
                    item.kind, self.name
                )));
            }
            if item.embedding.dimension() != self.dimension {
                return Err(Error::Configuration(format!(
                    "item embedding dimension {} does not match store dimension {}",
                    item.embedding.dimension(),
                    self.dimension
                )));
            }
            if item.text.trim().is_empty() {
                return Err(Error::Validation("memory item text must be non-empty".into()));
            }
        }
        let mut inserted = 0;
        for item in new_items {
            let key = normalize(&item.text);
            if self.normalized_texts.insert(key) {
                self.items.push(item);
                inserted += 1;
            }
        }
        Ok(inserted)
    }

    /// Write the store as JSON Lines; the write goes to a temp file first and
    /// is renamed into place.
    pub fn persist(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut file = File::create(&tmp)?;
            for item in &self.items {
                let line = serde_json::to_string(item)
                    .map_err(|e| Error::Storage(format!("encode memory item: {e}")))?;
                writeln!(file, "{line}")?;
            }
            file.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Load a store from JSON Lines. A missing file loads as empty; a broken
    /// line is a parse error naming its line number.
    pub fn load(path: &Path, name: StoreName, dimension: usize) -> Result<Self> {
        let mut store = Self::new(name, dimension);
        if !path.exists() {
            return Ok(store);
        }
        let reader = BufReader::new(File::open(path)?);
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: MemoryItem = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            if item.kind.store() != name {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: idx + 1,
                    message: format!("item kind {:?} does not belong in the {name} store", item.kind),
                });
            }
            if item.embedding.dimension() != dimension {
                return Err(Error::Configuration(format!(
                    "{}: line {}: embedding dimension {} does not match configured {}",
                    path.display(),
                    idx + 1,
                    item.embedding.dimension(),
                    dimension
                )));
            }
            store.normalized_texts.insert(normalize(&item.text));
            store.items.push(item);
        }
        Ok(store)
    }
}
