use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use chrono::{DateTime, Utc};
use rusqlite::types::Value;
use rusqlite::{params, params_from_iter, Connection, OpenFlags, OptionalExtension, Row};

use super::codec::{decode_theta, encode_theta, from_json, to_json};
use super::{
    decode_timestamp, encode_timestamp, EntryFilter, EntryReader, EntryStatus, ModelArtifacts,
    ModelRecord, ModelStatus, Page, StoreError, StoredEntry,
};
use crate::hybrid::HybridModel;
use crate::ingest::{Document, PersonRef, Platform};
use crate::lda::LdaModel;
use crate::textprep::Vocabulary;

pub const DB_FILE: &str = "mustas.db";
pub const MODELS_DIR: &str = "models";
pub const FORMAT_VERSION: &str = "1";

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS documents (
    doc_id            TEXT PRIMARY KEY,
    person_id         TEXT NOT NULL,
    display_name      TEXT NOT NULL,
    party             TEXT NOT NULL,
    platform          TEXT NOT NULL,
    timestamp         TEXT NOT NULL,
    source_url        TEXT NOT NULL,
    text              TEXT NOT NULL,
    ingest_time       TEXT NOT NULL,
    metadata          TEXT NOT NULL,
    status            TEXT NOT NULL,
    quarantine_reason TEXT
);
CREATE INDEX IF NOT EXISTS documents_by_time ON documents (status, timestamp, doc_id);
CREATE TABLE IF NOT EXISTS seen_raw (
    source_id   TEXT NOT NULL,
    external_id TEXT NOT NULL,
    PRIMARY KEY (source_id, external_id)
);
CREATE TABLE IF NOT EXISTS models (
    model_id      TEXT PRIMARY KEY,
    backend       TEXT NOT NULL,
    k             INTEGER NOT NULL,
    created_at    TEXT NOT NULL,
    config        TEXT NOT NULL,
    vocab_version TEXT NOT NULL,
    artifact_path TEXT NOT NULL,
    status        TEXT NOT NULL,
    checksum      TEXT
);
CREATE TABLE IF NOT EXISTS entries (
    doc_id          TEXT NOT NULL REFERENCES documents (doc_id),
    model_id        TEXT NOT NULL REFERENCES models (model_id),
    person_id       TEXT NOT NULL,
    party           TEXT NOT NULL,
    platform        TEXT NOT NULL,
    timestamp       TEXT NOT NULL,
    source_url      TEXT NOT NULL,
    theta           TEXT NOT NULL,
    paragraph_count INTEGER NOT NULL,
    token_count     INTEGER NOT NULL,
    paragraphs      TEXT,
    status          TEXT NOT NULL,
    metadata        TEXT NOT NULL,
    PRIMARY KEY (doc_id, model_id)
);
CREATE INDEX IF NOT EXISTS entries_by_time ON entries (model_id, status, timestamp, doc_id);
";

/// A stored document with its review status.
#[derive(Debug, Clone, PartialEq)]
pub struct DocumentRecord {
    pub document: Document,
    pub status: EntryStatus,
    pub quarantine_reason: Option<String>,
}

/// Handle on a store directory.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    conn: Connection,
    read_only: bool,
}

fn corrupt(what: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt(what.to_string())
}

fn parse_platform(s: &str) -> Result<Platform, StoreError> {
    s.parse().map_err(corrupt)
}

fn parse_status(s: &str) -> Result<EntryStatus, StoreError> {
    match s {
        "active" => Ok(EntryStatus::Active),
        "quarantined" => Ok(EntryStatus::Quarantined),
        _ => Err(corrupt(format!("status `{s}`"))),
    }
}

fn parse_model_status(s: &str) -> Result<ModelStatus, StoreError> {
    match s {
        "staged" => Ok(ModelStatus::Staged),
        "released" => Ok(ModelStatus::Released),
        "retired" => Ok(ModelStatus::Retired),
        _ => Err(corrupt(format!("model status `{s}`"))),
    }
}

const ENTRY_COLUMNS: &str = "doc_id, model_id, person_id, party, platform, timestamp, source_url, \
     theta, paragraph_count, token_count, paragraphs, status, metadata";

fn entry_from_row(row: &Row<'_>) -> Result<StoredEntry, StoreError> {
    let paragraphs: Option<String> = row.get(10)?;
    Ok(StoredEntry {
        doc_id: row.get(0)?,
        model_id: row.get(1)?,
        person_id: row.get(2)?,
        party: row.get(3)?,
        platform: parse_platform(&row.get::<_, String>(4)?)?,
        timestamp: decode_timestamp(&row.get::<_, String>(5)?)?,
        source_url: row.get(6)?,
        theta: decode_theta(&row.get::<_, String>(7)?)?,
        paragraph_count: row.get::<_, i64>(8)? as usize,
        token_count: row.get::<_, i64>(9)? as u64,
        paragraphs: paragraphs
            .map(|p| from_json(&p, "paragraph detail"))
            .transpose()?,
        status: parse_status(&row.get::<_, String>(11)?)?,
        metadata: from_json(&row.get::<_, String>(12)?, "metadata")?,
    })
}

const DOCUMENT_COLUMNS: &str = "doc_id, person_id, display_name, party, platform, timestamp, \
     source_url, text, ingest_time, metadata, status, quarantine_reason";

fn document_from_row(row: &Row<'_>) -> Result<DocumentRecord, StoreError> {
    let party: String = row.get(3)?;
    Ok(DocumentRecord {
        document: Document {
            doc_id: row.get(0)?,
            person: PersonRef {
                id: row.get(1)?,
                display_name: row.get(2)?,
                party: party.clone(),
            },
            party,
            platform: parse_platform(&row.get::<_, String>(4)?)?,
            timestamp: decode_timestamp(&row.get::<_, String>(5)?)?,
            source_url: row.get(6)?,
            text: row.get(7)?,
            ingest_time: decode_timestamp(&row.get::<_, String>(8)?)?,
            metadata: from_json(&row.get::<_, String>(9)?, "metadata")?,
        },
        status: parse_status(&row.get::<_, String>(10)?)?,
        quarantine_reason: row.get(11)?,
    })
}

const MODEL_COLUMNS: &str =
    "model_id, backend, k, created_at, config, vocab_version, artifact_path, status, checksum";

fn model_from_row(row: &Row<'_>) -> Result<ModelRecord, StoreError> {
    Ok(ModelRecord {
        model_id: row.get(0)?,
        backend: row.get::<_, String>(1)?.parse().map_err(corrupt)?,
        k: row.get::<_, i64>(2)? as usize,
        created_at: decode_timestamp(&row.get::<_, String>(3)?)?,
        config: from_json(&row.get::<_, String>(4)?, "model config")?,
        vocab_version: row.get(5)?,
        artifact_path: row.get(6)?,
        status: parse_model_status(&row.get::<_, String>(7)?)?,
        checksum: row.get(8)?,
    })
}

/// A trained model loaded from its artifacts.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Lda(LdaModel),
    Hybrid(HybridModel),
}

impl Store {
    /// Opens a store for writing, creating the directory and schema if
    /// needed.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join(MODELS_DIR))?;
        let conn = Connection::open(root.join(DB_FILE))?;
        conn.busy_timeout(Duration::from_secs(30))?;
        conn.pragma_update(None, "foreign_keys", "ON")?;
        conn.execute_batch(SCHEMA)?;
        let version: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'format_version'", [], |r| r.get(0))
            .optional()?;
        match version.as_deref() {
            None => {
                conn.execute(
                    "INSERT INTO meta (key, value) VALUES ('format_version', ?1)",
                    [FORMAT_VERSION],
                )?;
            }
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(StoreError::UnsupportedFormat(v.to_string())),
        }
        Ok(Self {
            root,
            conn,
            read_only: false,
        })
    }

    /// Opens an existing store without write access.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let db = root.join(DB_FILE);
        if !db.is_file() {
            return Err(StoreError::Missing(root.display().to_string()));
        }
        let conn = Connection::open_with_flags(
            &db,
            OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
        )?;
        conn.busy_timeout(Duration::from_secs(30))?;
        let version: Option<String> = conn
            .query_row("SELECT value FROM meta WHERE key = 'format_version'", [], |r| r.get(0))
            .optional()?;
        if version.as_deref() != Some(FORMAT_VERSION) {
            return Err(StoreError::UnsupportedFormat(
                version.unwrap_or_else(|| "missing".into()),
            ));
        }
        Ok(Self {
            root,
            conn,
            read_only: true,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_read_only(&self) -> bool {
        self.read_only
    }

    /// Runs `f` inside one transaction; it commits only if `f` succeeds.
    /// Nested calls join the enclosing transaction.
    pub fn in_transaction<T>(
        &self,
        f: impl FnOnce(&Self) -> Result<T, StoreError>,
    ) -> Result<T, StoreError> {
        if !self.conn.is_autocommit() {
            return f(self);
        }
        let tx = self.conn.unchecked_transaction()?;
        let out = f(self)?;
        tx.commit()?;
        Ok(out)
    }

    // Documents

    fn insert_document(
        &self,
        doc: &Document,
        status: EntryStatus,
        reason: Option<&str>,
    ) -> Result<bool, StoreError> {
        let n = self.conn.execute(
            &format!(
                "INSERT INTO documents ({DOCUMENT_COLUMNS}) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12) \
                 ON CONFLICT (doc_id) DO NOTHING"
            ),
            params![
                doc.doc_id,
                doc.person.id,
                doc.person.display_name,
                doc.party,
                doc.platform.as_str(),
                encode_timestamp(doc.timestamp),
                doc.source_url,
                doc.text,
                encode_timestamp(doc.ingest_time),
                to_json(&doc.metadata),
                status.as_str(),
                reason,
            ],
        )?;
        Ok(n == 1)
    }

    /// Inserts an active document. Returns false when the doc id is already
    /// stored, in which case the stored record is left untouched.
    pub fn put_document(&self, doc: &Document) -> Result<bool, StoreError> {
        self.insert_document(doc, EntryStatus::Active, None)
    }

    /// Stores a document held for manual review.
    pub fn put_quarantined(&self, doc: &Document, reason: &str) -> Result<bool, StoreError> {
        self.insert_document(doc, EntryStatus::Quarantined, Some(reason))
    }

    pub fn get_document(&self, doc_id: &str) -> Result<Option<DocumentRecord>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached(&format!("SELECT {DOCUMENT_COLUMNS} FROM documents WHERE doc_id = ?1"))?;
        let mut rows = stmt.query([doc_id])?;
        match rows.next()? {
            Some(row) => Ok(Some(document_from_row(row)?)),
            None => Ok(None),
        }
    }

    /// Documents with the given status ordered by `(timestamp, doc_id)`,
    /// optionally only those at or after `since`.
    pub fn documents(
        &self,
        status: EntryStatus,
        since: Option<DateTime<Utc>>,
    ) -> Result<Vec<Document>, StoreError> {
        let since = since.map(encode_timestamp).unwrap_or_default();
        let mut stmt = self.conn.prepare_cached(&format!(
            "SELECT {DOCUMENT_COLUMNS} FROM documents WHERE status = ?1 AND timestamp >= ?2 \
             ORDER BY timestamp, doc_id"
        ))?;
        let mut rows = stmt.query(params![status.as_str(), since])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(document_from_row(row)?.document);
        }
        Ok(out)
    }

    pub fn count_documents(&self, status: EntryStatus) -> Result<usize, StoreError> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM documents WHERE status = ?1",
            [status.as_str()],
            |r| r.get(0),
        )?;
        Ok(n as usize)
    }

    /// Active documents without an entry under `model_id`.
    pub fn documents_without_entry(
        &self,
        model_id: &str,
        since: Option<DateTime<Utc>>,
    ) -> Result<Vec<Document>, StoreError> {
        let since = since.map(encode_timestamp).unwrap_or_default();
        let mut stmt = self.conn.prepare_cached(&format!(
            "SELECT {DOCUMENT_COLUMNS} FROM documents d WHERE d.status = 'active' \
             AND d.timestamp >= ?2 \
             AND NOT EXISTS (SELECT 1 FROM entries e WHERE e.doc_id = d.doc_id AND e.model_id = ?1) \
             ORDER BY d.timestamp, d.doc_id"
        ))?;
        let mut rows = stmt.query(params![model_id, since])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(document_from_row(row)?.document);
        }
        Ok(out)
    }

    pub fn mark_seen(&self, source_id: &str, external_id: &str) -> Result<(), StoreError> {
        self.conn.execute(
            "INSERT OR IGNORE INTO seen_raw (source_id, external_id) VALUES (?1, ?2)",
            params![source_id, external_id],
        )?;
        Ok(())
    }

    /// Every `(source_id, external_id)` fetched so far.
    pub fn seen(&self) -> Result<Vec<(String, String)>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached("SELECT source_id, external_id FROM seen_raw ORDER BY 1, 2")?;
        let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?;
        Ok(rows.collect::<Result<_, _>>()?)
    }

    // Models

    fn artifact_dir(&self, model_id: &str) -> PathBuf {
        self.root.join(MODELS_DIR).join(model_id)
    }

    /// Writes the artifacts and records the model as staged.
    pub fn register_model(
        &self,
        record: &ModelRecord,
        artifacts: &ModelArtifacts,
    ) -> Result<(), StoreError> {
        if self.model(&record.model_id)?.is_some() {
            return Err(StoreError::DuplicateModel(record.model_id.clone()));
        }
        let dir = self.artifact_dir(&record.model_id);
        fs::create_dir_all(&dir)?;
        for (name, bytes) in [("model.txt", &artifacts.model), ("vocab.txt", &artifacts.vocab)] {
            let mut f = fs::File::create(dir.join(name))?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        self.conn.execute(
            &format!("INSERT INTO models ({MODEL_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, NULL)"),
            params![
                record.model_id,
                record.backend.as_str(),
                record.k as i64,
                encode_timestamp(record.created_at),
                to_json(&record.config),
                record.vocab_version,
                format!("{MODELS_DIR}/{}", record.model_id),
                ModelStatus::Staged.as_str(),
            ],
        )?;
        Ok(())
    }

    fn require_model(&self, model_id: &str) -> Result<ModelRecord, StoreError> {
        self.model(model_id)?
            .ok_or_else(|| StoreError::UnknownModel(model_id.to_string()))
    }

    fn transition(&self, model_id: &str, from: ModelStatus, to: ModelStatus) -> Result<ModelRecord, StoreError> {
        let rec = self.require_model(model_id)?;
        if rec.status != from {
            return Err(StoreError::IllegalTransition {
                model_id: model_id.to_string(),
                from: rec.status,
                to,
            });
        }
        Ok(rec)
    }

    /// Staged to released; checksums the artifacts, which are immutable from
    /// then on.
    pub fn release_model(&self, model_id: &str) -> Result<ModelRecord, StoreError> {
        self.transition(model_id, ModelStatus::Staged, ModelStatus::Released)?;
        let checksum = self.read_artifacts(model_id)?.checksum();
        self.conn.execute(
            "UPDATE models SET status = 'released', checksum = ?2 WHERE model_id = ?1",
            params![model_id, checksum],
        )?;
        self.require_model(model_id)
    }

    /// Released to retired.
    pub fn retire_model(&self, model_id: &str) -> Result<ModelRecord, StoreError> {
        self.transition(model_id, ModelStatus::Released, ModelStatus::Retired)?;
        self.conn.execute(
            "UPDATE models SET status = 'retired' WHERE model_id = ?1",
            [model_id],
        )?;
        self.require_model(model_id)
    }

    /// Every model, newest first (ties by id).
    pub fn list_models(&self) -> Result<Vec<ModelRecord>, StoreError> {
        let mut stmt = self.conn.prepare_cached(&format!(
            "SELECT {MODEL_COLUMNS} FROM models ORDER BY created_at DESC, model_id"
        ))?;
        let mut rows = stmt.query([])?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(model_from_row(row)?);
        }
        Ok(out)
    }

    fn read_artifacts(&self, model_id: &str) -> Result<ModelArtifacts, StoreError> {
        let dir = self.artifact_dir(model_id);
        Ok(ModelArtifacts {
            model: fs::read(dir.join("model.txt"))?,
            vocab: fs::read(dir.join("vocab.txt"))?,
        })
    }

    /// Reads the artifacts, verifying the release checksum when there is one.
    pub fn load_artifacts(&self, model_id: &str) -> Result<ModelArtifacts, StoreError> {
        let rec = self.require_model(model_id)?;
        let artifacts = self.read_artifacts(model_id)?;
        if let Some(expected) = &rec.checksum {
            if artifacts.checksum() != *expected {
                return Err(StoreError::ChecksumMismatch(model_id.to_string()));
            }
        }
        Ok(artifacts)
    }

    /// Loads and decodes a model together with its vocabulary.
    pub fn load_model(
        &self,
        model_id: &str,
    ) -> Result<(ModelRecord, LoadedModel, Vocabulary), StoreError> {
        let rec = self.require_model(model_id)?;
        let artifacts = self.load_artifacts(model_id)?;
        let vocab = Vocabulary::read_from(&artifacts.vocab[..])
            .map_err(|e| corrupt(format!("vocabulary of {model_id}: {e}")))?;
        let model = match rec.backend {
            super::Backend::Lda => LoadedModel::Lda(
                LdaModel::from_bytes(&artifacts.model)
                    .map_err(|e| corrupt(format!("model {model_id}: {e}")))?,
            ),
            super::Backend::Hybrid => LoadedModel::Hybrid(
                HybridModel::from_bytes(&artifacts.model)
                    .map_err(|e| corrupt(format!("model {model_id}: {e}")))?,
            ),
        };
        Ok((rec, model, vocab))
    }

    // Entries

    fn write_entry(&self, e: &StoredEntry) -> Result<(), StoreError> {
        let doc_exists: bool = self.conn.query_row(
            "SELECT EXISTS (SELECT 1 FROM documents WHERE doc_id = ?1)",
            [&e.doc_id],
            |r| r.get(0),
        )?;
        if !doc_exists {
            return Err(StoreError::ForeignKeyViolation(format!("unknown document {}", e.doc_id)));
        }
        if self.model(&e.model_id)?.is_none() {
            return Err(StoreError::ForeignKeyViolation(format!("unknown model {}", e.model_id)));
        }
        self.conn.execute(
            &format!(
                "INSERT INTO entries ({ENTRY_COLUMNS}) \
                 VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13) \
                 ON CONFLICT (doc_id, model_id) DO UPDATE SET \
                 person_id = excluded.person_id, party = excluded.party, \
                 platform = excluded.platform, timestamp = excluded.timestamp, \
                 source_url = excluded.source_url, theta = excluded.theta, \
                 paragraph_count = excluded.paragraph_count, token_count = excluded.token_count, \
                 paragraphs = excluded.paragraphs, status = excluded.status, \
                 metadata = excluded.metadata"
            ),
            params![
                e.doc_id,
                e.model_id,
                e.person_id,
                e.party,
                e.platform.as_str(),
                encode_timestamp(e.timestamp),
                e.source_url,
                encode_theta(&e.theta),
                e.paragraph_count as i64,
                e.token_count as i64,
                e.paragraphs.as_ref().map(to_json),
                e.status.as_str(),
                to_json(&e.metadata),
            ],
        )?;
        Ok(())
    }

    /// Upserts an entry keyed by `(doc_id, model_id)`; both must exist.
    pub fn put_entry(&self, entry: &StoredEntry) -> Result<(), StoreError> {
        self.write_entry(entry)
    }

    /// Upserts a batch atomically.
    pub fn put_entries(&self, entries: &[StoredEntry]) -> Result<(), StoreError> {
        self.in_transaction(|s| entries.iter().try_for_each(|e| s.write_entry(e)))
    }

    pub fn get_entry(&self, doc_id: &str, model_id: &str) -> Result<Option<StoredEntry>, StoreError> {
        let mut stmt = self.conn.prepare_cached(&format!(
            "SELECT {ENTRY_COLUMNS} FROM entries WHERE doc_id = ?1 AND model_id = ?2"
        ))?;
        let mut rows = stmt.query([doc_id, model_id])?;
        match rows.next()? {
            Some(row) => Ok(Some(entry_from_row(row)?)),
            None => Ok(None),
        }
    }

    pub fn count_entries(&self, model_id: &str) -> Result<usize, StoreError> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM entries WHERE model_id = ?1",
            [model_id],
            |r| r.get(0),
        )?;
        Ok(n as usize)
    }

    /// Writes every entry of a model as one JSON object per line, ordered by
    /// `(timestamp, doc_id)`. Returns the number of lines.
    pub fn export_entries<W: Write>(&self, model_id: &str, mut out: W) -> Result<usize, StoreError> {
        self.require_model(model_id)?;
        let mut stmt = self.conn.prepare_cached(&format!(
            "SELECT {ENTRY_COLUMNS} FROM entries WHERE model_id = ?1 ORDER BY timestamp, doc_id"
        ))?;
        let mut rows = stmt.query([model_id])?;
        let mut n = 0;
        while let Some(row) = rows.next()? {
            let entry = entry_from_row(row)?;
            serde_json::to_writer(&mut out, &entry).map_err(|e| StoreError::Io(e.into()))?;
            out.write_all(b"\n")?;
            n += 1;
        }
        out.flush()?;
        Ok(n)
    }
}

fn in_clause(column: &str, values: Vec<String>, args: &mut Vec<Value>) -> String {
    if values.is_empty() {
        return "0".to_string();
    }
    let marks: Vec<String> = values
        .into_iter()
        .map(|v| {
            args.push(Value::Text(v));
            format!("?{}", args.len())
        })
        .collect();
    format!("{column} IN ({})", marks.join(", "))
}

impl EntryReader for Store {
    fn model(&self, model_id: &str) -> Result<Option<ModelRecord>, StoreError> {
        let mut stmt = self
            .conn
            .prepare_cached(&format!("SELECT {MODEL_COLUMNS} FROM models WHERE model_id = ?1"))?;
        let mut rows = stmt.query([model_id])?;
        match rows.next()? {
            Some(row) => Ok(Some(model_from_row(row)?)),
            None => Ok(None),
        }
    }

    fn query_entries(&self, filter: &EntryFilter, page: Page) -> Result<Vec<StoredEntry>, StoreError> {
        self.require_model(&filter.model_id)?;
        let mut args: Vec<Value> = vec![Value::Text(filter.model_id.clone())];
        let mut clauses = vec!["model_id = ?1".to_string(), "status = 'active'".to_string()];
        if let Some(p) = &filter.persons {
            clauses.push(in_clause("person_id", p.iter().cloned().collect(), &mut args));
        }
        if let Some(p) = &filter.parties {
            clauses.push(in_clause("party", p.iter().cloned().collect(), &mut args));
        }
        if let Some(p) = &filter.platforms {
            clauses.push(in_clause(
                "platform",
                p.iter().map(|x| x.as_str().to_string()).collect(),
                &mut args,
            ));
        }
        if let Some(t) = filter.start {
            args.push(Value::Text(encode_timestamp(t)));
            clauses.push(format!("timestamp >= ?{}", args.len()));
        }
        if let Some(t) = filter.end {
            args.push(Value::Text(encode_timestamp(t)));
            clauses.push(format!("timestamp < ?{}", args.len()));
        }
        args.push(Value::Integer(page.limit.map_or(-1, |l| l as i64)));
        let limit = args.len();
        args.push(Value::Integer(page.offset as i64));
        let offset = args.len();
        let sql = format!(
            "SELECT {ENTRY_COLUMNS} FROM entries WHERE {} ORDER BY timestamp, doc_id \
             LIMIT ?{limit} OFFSET ?{offset}",
            clauses.join(" AND ")
        );
        let mut stmt = self.conn.prepare(&sql)?;
        let mut rows = stmt.query(params_from_iter(args))?;
        let mut out = Vec::new();
        while let Some(row) = rows.next()? {
            out.push(entry_from_row(row)?);
        }
        Ok(out)
    }
}

/// Entry for a document and its paragraph mixtures; identity fields are
/// copied from the document, counts are derived from the paragraphs.
pub fn entry_for(
    doc: &Document,
    model_id: &str,
    theta: crate::TopicDistribution,
    paragraphs: Vec<super::ParagraphTopics>,
) -> StoredEntry {
    let token_count = paragraphs.iter().map(|p| p.token_count).sum();
    StoredEntry {
        doc_id: doc.doc_id.clone(),
        model_id: model_id.to_string(),
        person_id: doc.person.id.clone(),
        party: doc.party.clone(),
        platform: doc.platform,
        timestamp: doc.timestamp,
        source_url: doc.source_url.clone(),
        paragraph_count: paragraphs.len(),
        theta,
        token_count,
        paragraphs: Some(paragraphs),
        status: EntryStatus::Active,
        metadata: doc.metadata.clone(),
    }
}
