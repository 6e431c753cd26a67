//! Source connectors and document normalization.
//!
//! Each configured source is described by a [`SourceDescriptor`]. A
//! [`Fetcher`] pulls the raw documents that have not been seen yet, the
//! normalizer resolves the author against the person registry and computes
//! the content-addressed document id, and [`dedupe`] drops exact repeats.
//! Documents whose author cannot be resolved are not dropped: the pipeline
//! stores them as quarantined.

mod config;
mod feed;
mod html;
mod normalize;
mod rss;
mod transcript;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{load_registry, load_sources, parse_registry, parse_sources, ConfigError};
pub use feed::{parse_feed_file, parse_http_json};
pub use html::strip_html;
pub use normalize::{
    compute_doc_id, dedupe, normalize, quarantined_document, NormalizeError, UNRESOLVED_PERSON,
};
pub use rss::parse_rss;
pub use transcript::{parse_transcript, TranscriptFormat};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("source {source_id} unavailable: {message}")]
    SourceUnavailable { source_id: String, message: String },
    #[error("{0}")]
    Parse(#[from] ParseFailure),
}

/// Malformed payload. `offset` is the byte offset of the first invalid byte
/// when known, `record` the index of the offending record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ParseFailure {
    pub offset: Option<u64>,
    pub record: Option<usize>,
    pub message: String,
}

impl ParseFailure {
    pub fn at_offset(offset: u64, message: impl Into<String>) -> Self {
        Self {
            offset: Some(offset),
            record: None,
            message: message.into(),
        }
    }

    pub fn at_record(record: usize, message: impl Into<String>) -> Self {
        Self {
            offset: None,
            record: Some(record),
            message: message.into(),
        }
    }
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "parse failure")?;
        if let Some(r) = self.record {
            write!(f, " at record {r}")?;
        }
        if let Some(o) = self.offset {
            write!(f, " at byte {o}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Parliament,
    Social,
    Blog,
    Other,
}

impl Platform {
    pub const ALL: [Platform; 4] = [
        Platform::Parliament,
        Platform::Social,
        Platform::Blog,
        Platform::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Parliament => "parliament",
            Platform::Social => "social",
            Platform::Blog => "blog",
            Platform::Other => "other",
        }
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Platform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Platform::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown platform `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRef {
    pub id: String,
    pub display_name: String,
    pub party: String,
}

/// True when `id` matches `[a-z0-9-]+`.
pub fn is_valid_person_id(id: &str) -> bool {
    !id.is_empty()
        && id
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'-')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    FeedFile,
    RssUrl,
    HttpJson,
    TranscriptDir,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceDescriptor {
    pub source_id: String,
    pub kind: SourceKind,
    /// URL or filesystem path, depending on `kind`.
    pub location: String,
    pub platform: Platform,
    /// Person id used when a document carries no resolvable author.
    pub default_person: Option<String>,
    pub poll_interval: Option<u64>,
    /// Only meaningful for `transcript_dir` sources.
    pub transcript_format: Option<TranscriptFormat>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub source_id: String,
    pub external_id: String,
    pub body: String,
    pub author_hint: Option<String>,
    pub published_at: Option<DateTime<Utc>>,
    pub url: String,
    pub title: Option<String>,
}

/// A normalized unit of politician speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub person: PersonRef,
    pub party: String,
    pub platform: Platform,
    pub timestamp: DateTime<Utc>,
    pub source_url: String,
    pub text: String,
    pub ingest_time: DateTime<Utc>,
    /// Opaque key-values surfaced verbatim (title, source id, external id).
    pub metadata: BTreeMap<String, String>,
}

const HTTP_TIMEOUT: Duration = Duration::from_secs(30);

fn is_http(location: &str) -> bool {
    location.starts_with("http://") || location.starts_with("https://")
}

fn local_path(location: &str) -> PathBuf {
    PathBuf::from(location.strip_prefix("file://").unwrap_or(location))
}

fn unavailable(desc: &SourceDescriptor, message: impl fmt::Display) -> IngestError {
    IngestError::SourceUnavailable {
        source_id: desc.source_id.clone(),
        message: message.to_string(),
    }
}

fn read_location(desc: &SourceDescriptor) -> Result<Vec<u8>, IngestError> {
    if is_http(&desc.location) {
        let client = reqwest::blocking::Client::builder()
            .timeout(HTTP_TIMEOUT)
            .build()
            .map_err(|e| unavailable(desc, e))?;
        let resp = client
            .get(&desc.location)
            .send()
            .map_err(|e| unavailable(desc, e))?;
        if !resp.status().is_success() {
            return Err(unavailable(desc, format!("HTTP {}", resp.status())));
        }
        Ok(resp.bytes().map_err(|e| unavailable(desc, e))?.to_vec())
    } else {
        let path = local_path(&desc.location);
        std::fs::read(&path).map_err(|e| unavailable(desc, format!("{}: {e}", path.display())))
    }
}

fn read_transcript_dir(desc: &SourceDescriptor) -> Result<Vec<RawDocument>, IngestError> {
    let dir = local_path(&desc.location);
    let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
        .map_err(|e| unavailable(desc, format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    let format = desc.transcript_format.unwrap_or(TranscriptFormat::PlainSections);
    let mut out = Vec::new();
    for path in files {
        let bytes = std::fs::read(&path)
            .map_err(|e| unavailable(desc, format!("{}: {e}", path.display())))?;
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("transcript");
        let origin = format!("{}/{name}", desc.location.trim_end_matches('/'));
        out.extend(parse_transcript(&bytes, format, &desc.source_id, &origin)?);
    }
    Ok(out)
}

/// Reads every document currently at a source, without deduplication.
pub fn read_source(desc: &SourceDescriptor) -> Result<Vec<RawDocument>, IngestError> {
    match desc.kind {
        SourceKind::FeedFile => {
            let bytes = read_location(desc)?;
            Ok(parse_feed_file(&bytes, &desc.source_id)?)
        }
        SourceKind::HttpJson => {
            let bytes = read_location(desc)?;
            Ok(parse_http_json(&bytes, &desc.source_id)?)
        }
        SourceKind::RssUrl => {
            let bytes = read_location(desc)?;
            Ok(parse_rss(&bytes, &desc.source_id)?)
        }
        SourceKind::TranscriptDir => read_transcript_dir(desc),
    }
}

/// Remembers which `(source_id, external_id)` pairs have been fetched so
/// repeated polls only return new documents.
#[derive(Debug, Default, Clone)]
pub struct Fetcher {
    seen: HashSet<(String, String)>,
}

impl Fetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_seen<I>(seen: I) -> Self
    where
        I: IntoIterator<Item = (String, String)>,
    {
        Self {
            seen: seen.into_iter().collect(),
        }
    }

    pub fn is_seen(&self, source_id: &str, external_id: &str) -> bool {
        self.seen
            .contains(&(source_id.to_string(), external_id.to_string()))
    }

    /// Returns the unseen documents of a source in ascending `published_at`
    /// order (undated first), ties by `external_id`, and marks them seen.
    pub fn fetch(&mut self, desc: &SourceDescriptor) -> Result<Vec<RawDocument>, IngestError> {
        let docs = read_source(desc)?;
        let mut fresh: Vec<RawDocument> = Vec::new();
        for doc in docs {
            let key = (doc.source_id.clone(), doc.external_id.clone());
            if self.seen.insert(key) {
                fresh.push(doc);
            }
        }
        fresh.sort_by(|a, b| {
            a.published_at
                .cmp(&b.published_at)
                .then_with(|| a.external_id.cmp(&b.external_id))
        });
        Ok(fresh)
    }
}

/// Convenience for one-off reads: fetch with an explicit seen set.
pub fn fetch(
    desc: &SourceDescriptor,
    seen: &HashSet<String>,
) -> Result<Vec<RawDocument>, IngestError> {
    let mut fetcher = Fetcher::with_seen(
        seen.iter()
            .map(|id| (desc.source_id.clone(), id.clone())),
    );
    fetcher.fetch(desc)
}

/// Parses an RFC 3339 or RFC 2822 instant, or a `YYYY-MM-DD` date (midnight UTC).
pub fn parse_instant(value: &str) -> Option<DateTime<Utc>> {
    let value = value.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(value) {
        return Some(t.with_timezone(&Utc));
    }
    if let Ok(t) = DateTime::parse_from_rfc2822(value) {
        return Some(t.with_timezone(&Utc));
    }
    chrono::NaiveDate::parse_from_str(value, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|t| t.and_utc())
}
