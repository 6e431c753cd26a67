use std::collections::{BTreeMap, HashSet};

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Document, PersonRef, Platform, RawDocument, SourceDescriptor};
use crate::textprep::tokenize;

/// Person id given to documents held for review because their author could
/// not be resolved.
pub const UNRESOLVED_PERSON: &str = "unresolved";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("no registered person matches author {author_hint:?} of {source_id}/{external_id}")]
    UnknownPerson {
        source_id: String,
        external_id: String,
        author_hint: Option<String>,
    },
    #[error("document {source_id}/{external_id} has no tokens")]
    EmptyText {
        source_id: String,
        external_id: String,
    },
}

/// Content hash over the identity fields, hex encoded.
pub fn compute_doc_id(person_id: &str, platform: Platform, source_url: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for (i, part) in [person_id, platform.as_str(), source_url, text].iter().enumerate() {
        if i > 0 {
            h.update([0x1f]);
        }
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

fn resolve<'a>(
    raw: &RawDocument,
    registry: &'a [PersonRef],
    desc: &SourceDescriptor,
) -> Option<&'a PersonRef> {
    let by_name = raw.author_hint.as_deref().and_then(|hint| {
        let hint = hint.trim().to_lowercase();
        registry
            .iter()
            .find(|p| p.display_name.trim().to_lowercase() == hint)
    });
    by_name.or_else(|| {
        desc.default_person
            .as_deref()
            .and_then(|id| registry.iter().find(|p| p.id == id))
    })
}

fn metadata(raw: &RawDocument) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("source_id".to_string(), raw.source_id.clone());
    m.insert("external_id".to_string(), raw.external_id.clone());
    if let Some(t) = &raw.title {
        m.insert("title".to_string(), t.clone());
    }
    m
}

fn build(
    raw: &RawDocument,
    person: PersonRef,
    desc: &SourceDescriptor,
    ingest_time: DateTime<Utc>,
) -> Document {
    let timestamp = raw.published_at.unwrap_or(ingest_time).min(ingest_time);
    Document {
        doc_id: compute_doc_id(&person.id, desc.platform, &raw.url, &raw.body),
        party: person.party.clone(),
        person,
        platform: desc.platform,
        timestamp,
        source_url: raw.url.clone(),
        text: raw.body.clone(),
        ingest_time,
        metadata: metadata(raw),
    }
}

/// Resolves the author and builds the normalized [`Document`].
///
/// The author hint is matched against registry display names exactly, up to
/// case. When it matches nobody, or is absent, the source's default person
/// is used. A missing `published_at` becomes `ingest_time`, and timestamps
/// later than `ingest_time` are clamped to it.
pub fn normalize(
    raw: &RawDocument,
    registry: &[PersonRef],
    desc: &SourceDescriptor,
    ingest_time: DateTime<Utc>,
) -> Result<Document, NormalizeError> {
    let person = resolve(raw, registry, desc).ok_or_else(|| NormalizeError::UnknownPerson {
        source_id: raw.source_id.clone(),
        external_id: raw.external_id.clone(),
        author_hint: raw.author_hint.clone(),
    })?;
    if tokenize(&raw.body).0.is_empty() {
        return Err(NormalizeError::EmptyText {
            source_id: raw.source_id.clone(),
            external_id: raw.external_id.clone(),
        });
    }
    Ok(build(raw, person.clone(), desc, ingest_time))
}

/// The record kept for a document that failed normalization: attributed to
/// [`UNRESOLVED_PERSON`], with the author hint as display name.
pub fn quarantined_document(
    raw: &RawDocument,
    desc: &SourceDescriptor,
    ingest_time: DateTime<Utc>,
) -> Document {
    let person = PersonRef {
        id: UNRESOLVED_PERSON.to_string(),
        display_name: raw.author_hint.clone().unwrap_or_default(),
        party: String::new(),
    };
    build(raw, person, desc, ingest_time)
}

/// Removes repeated doc ids, keeping the first occurrence.
pub fn dedupe(docs: Vec<Document>) -> Vec<Document> {
    let mut seen = HashSet::new();
    docs.into_iter()
        .filter(|d| seen.insert(d.doc_id.clone()))
        .collect()
}
