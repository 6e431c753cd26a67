//! Persistence for documents, topic entries and the model registry.
//!
//! A store is a directory holding an SQLite database (`mustas.db`) and one
//! artifact directory per registered model (`models/<model_id>/model.txt`
//! and `vocab.txt`). There is a single writer (the CLI pipeline) and any
//! number of read-only handles (the HTTP service). Readers only ever see
//! committed transactions.
//!
//! Timestamps are stored as UTC RFC 3339 strings with nine fractional digits
//! so that string order equals time order. Topic vectors are stored as JSON
//! arrays of shortest round-trip decimals, which decode to the exact same
//! `f64` values.

mod codec;
mod sqlite;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::RollupQuery;
use crate::ingest::Platform;
use crate::TopicDistribution;

pub use codec::{decode_timestamp, encode_timestamp};
pub use sqlite::{entry_for, DocumentRecord, LoadedModel, Store, DB_FILE, FORMAT_VERSION, MODELS_DIR};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    Sqlite(#[from] rusqlite::Error),
    #[error("storage failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("foreign key violation: {0}")]
    ForeignKeyViolation(String),
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("model {0} is already registered")]
    DuplicateModel(String),
    #[error("model {model_id}: illegal transition {from} -> {to}")]
    IllegalTransition {
        model_id: String,
        from: ModelStatus,
        to: ModelStatus,
    },
    #[error("artifacts of model {0} do not match their release checksum")]
    ChecksumMismatch(String),
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("unsupported store format: {0}")]
    UnsupportedFormat(String),
    #[error("no store at {0}")]
    Missing(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Active,
    Quarantined,
}

impl EntryStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EntryStatus::Active => "active",
            EntryStatus::Quarantined => "quarantined",
        }
    }
}

/// Topic mixture of one paragraph, kept as optional detail of an entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphTopics {
    pub index: usize,
    pub token_count: u64,
    pub theta: TopicDistribution,
}

/// A document joined with its topic mixture under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEntry {
    pub doc_id: String,
    pub model_id: String,
    pub person_id: String,
    pub party: String,
    pub platform: Platform,
    pub timestamp: DateTime<Utc>,
    pub source_url: String,
    pub theta: TopicDistribution,
    pub paragraph_count: usize,
    pub token_count: u64,
    pub paragraphs: Option<Vec<ParagraphTopics>>,
    pub status: EntryStatus,
    pub metadata: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Lda,
    Hybrid,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Lda => "lda",
            Backend::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lda" => Ok(Backend::Lda),
            "hybrid" => Ok(Backend::Hybrid),
            _ => Err(format!("unknown backend `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelStatus {
    Staged,
    Released,
    Retired,
}

impl ModelStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelStatus::Staged => "staged",
            ModelStatus::Released => "released",
            ModelStatus::Retired => "retired",
        }
    }
}

impl std::fmt::Display for ModelStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub backend: Backend,
    pub k: usize,
    pub created_at: DateTime<Utc>,
    /// Training configuration at registration time.
    pub config: serde_json::Value,
    pub vocab_version: String,
    /// Artifact directory, relative to the store root.
    pub artifact_path: String,
    pub status: ModelStatus,
    /// SHA-256 over the artifacts, set at release.
    pub checksum: Option<String>,
}

/// Serialized model and vocabulary files of a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelArtifacts {
    pub model: Vec<u8>,
    pub vocab: Vec<u8>,
}

impl ModelArtifacts {
    /// Hex SHA-256 over both files, each framed by its name and length.
    pub fn checksum(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for (name, bytes) in [("model.txt", &self.model), ("vocab.txt", &self.vocab)] {
            h.update(format!("{name}\n{}\n", bytes.len()).as_bytes());
            h.update(bytes);
        }
        hex::encode(h.finalize())
    }
}

/// Entry selection. `None` filters match everything; the time range is
/// half-open.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntryFilter {
    pub model_id: String,
    pub persons: Option<BTreeSet<String>>,
    pub parties: Option<BTreeSet<String>>,
    pub platforms: Option<BTreeSet<Platform>>,
    pub start: Option<DateTime<Utc>>,
    pub end: Option<DateTime<Utc>>,
}

impl EntryFilter {
    pub fn model(model_id: &str) -> Self {
        Self {
            model_id: model_id.to_string(),
            ..Self::default()
        }
    }

    pub fn matches(&self, e: &StoredEntry) -> bool {
        e.model_id == self.model_id
            && e.status == EntryStatus::Active
            && self.persons.as_ref().is_none_or(|s| s.contains(&e.person_id))
            && self.parties.as_ref().is_none_or(|s| s.contains(&e.party))
            && self.platforms.as_ref().is_none_or(|s| s.contains(&e.platform))
            && self.start.is_none_or(|t| e.timestamp >= t)
            && self.end.is_none_or(|t| e.timestamp < t)
    }
}

impl From<&RollupQuery> for EntryFilter {
    fn from(q: &RollupQuery) -> Self {
        Self {
            model_id: q.model_id.clone(),
            persons: q.persons.clone(),
            parties: q.parties.clone(),
            platforms: q.platforms.clone(),
            start: Some(q.start),
            end: Some(q.end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Page {
    pub offset: usize,
    /// `None` returns everything after `offset`.
    pub limit: Option<usize>,
}

impl Page {
    pub const ALL: Page = Page {
        offset: 0,
        limit: None,
    };
}

/// Read access used by rollups and the service, so another storage backend
/// can stand in for SQLite.
pub trait EntryReader {
    fn model(&self, model_id: &str) -> Result<Option<ModelRecord>, StoreError>;

    /// Active entries matching `filter`, ordered by `(timestamp, doc_id)`.
    fn query_entries(&self, filter: &EntryFilter, page: Page)
        -> Result<Vec<StoredEntry>, StoreError>;
}
