//! The pipeline stages behind the subcommands, callable as library
//! functions.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Utc};
use thiserror::Error;

use super::config::PipelineConfig;
use crate::aggregate::aggregate_document;
use crate::hybrid::{self, HybridError};
use crate::ingest::{
    self, dedupe, normalize, quarantined_document, Fetcher, IngestError, NormalizeError,
};
use crate::lda::{self, LdaConfig, LdaError, VocabRef};
use crate::rng::derive_seed;
use crate::store::{
    entry_for, Backend, LoadedModel, ModelArtifacts, ModelRecord, ModelStatus, ParagraphTopics,
    Store, StoreError, StoredEntry,
};
use crate::textprep::{
    build_vocabulary, default_english_stopwords, load_stopwords, segment, tokenize, Paragraph,
    TextprepError, Vocabulary,
};
use crate::TopicDistribution;

/// A failed stage, classified by exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("source error: {0}")]
    Source(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> u8 {
        match self {
            PipelineError::Runtime(_) => 1,
            PipelineError::Config(_) => 2,
            PipelineError::Source(_) => 3,
            PipelineError::Data(_) => 4,
        }
    }
}

impl From<StoreError> for PipelineError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::Sqlite(_) | StoreError::Io(_) => PipelineError::Runtime(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

fn open_store(cfg: &PipelineConfig) -> Result<Store, PipelineError> {
    Store::open(&cfg.store).map_err(|e| match e {
        StoreError::UnsupportedFormat(_) => PipelineError::Config(e.to_string()),
        other => other.into(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub fetched: usize,
    pub stored: usize,
    pub quarantined: usize,
    /// `(source_id, message)` of every source that could not be read.
    pub failures: Vec<(String, String)>,
}

impl IngestReport {
    pub fn summary(&self) -> String {
        format!(
            "fetched={} stored={} quarantined={}",
            self.fetched, self.stored, self.quarantined
        )
    }
}

/// Fetches every configured source (or only `only`), normalizes the new
/// documents and stores them. Documents whose author cannot be resolved, or
/// that contain no tokens, are stored as quarantined. A source that fails is
/// reported in [`IngestReport::failures`] and the others still run.
pub fn ingest(
    cfg: &PipelineConfig,
    only: Option<&str>,
    now: DateTime<Utc>,
    progress: &mut dyn Write,
) -> Result<IngestReport, PipelineError> {
    let (sources_path, persons_path) = cfg.ingest_files().map_err(PipelineError::Config)?;
    let registry =
        ingest::load_registry(persons_path).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mut sources = ingest::load_sources(sources_path, &registry)
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    if let Some(id) = only {
        sources.retain(|s| s.source_id == id);
        if sources.is_empty() {
            return Err(PipelineError::Config(format!("no source with id `{id}`")));
        }
    }
    let store = open_store(cfg)?;
    let mut fetcher = Fetcher::with_seen(store.seen()?);
    let mut report = IngestReport::default();

    for desc in &sources {
        let raws = match fetcher.fetch(desc) {
            Ok(r) => r,
            Err(e) => {
                let message = match &e {
                    IngestError::SourceUnavailable { message, .. } => message.clone(),
                    IngestError::Parse(p) => p.to_string(),
                };
                let _ = writeln!(progress, "source {}: failed: {message}", desc.source_id);
                report.failures.push((desc.source_id.clone(), message));
                continue;
            }
        };
        let mut good = Vec::new();
        let mut held = Vec::new();
        for raw in &raws {
            match normalize(raw, &registry, desc, now) {
                Ok(doc) => good.push(doc),
                Err(e) => {
                    let reason = match &e {
                        NormalizeError::UnknownPerson { .. } => "unknown_person",
                        NormalizeError::EmptyText { .. } => "empty_text",
                    };
                    held.push((quarantined_document(raw, desc, now), reason));
                }
            }
        }
        let good = dedupe(good);
        let (stored, quarantined) = store.in_transaction(|s| {
            let mut stored = 0;
            let mut quarantined = 0;
            for doc in &good {
                stored += usize::from(s.put_document(doc)?);
            }
            for (doc, reason) in &held {
                s.put_quarantined(doc, reason)?;
                quarantined += 1;
            }
            for raw in &raws {
                s.mark_seen(&raw.source_id, &raw.external_id)?;
            }
            Ok((stored, quarantined))
        })?;
        let _ = writeln!(
            progress,
            "source {}: fetched={} stored={stored} quarantined={quarantined}",
            desc.source_id,
            raws.len()
        );
        report.fetched += raws.len();
        report.stored += stored;
        report.quarantined += quarantined;
    }
    Ok(report)
}

/// Segmented training corpus.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Paragraphs of every document, in document order.
    pub documents: Vec<Vec<Paragraph>>,
}

impl Corpus {
    pub fn paragraph_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

fn stopwords(cfg: &PipelineConfig) -> Result<HashSet<String>, PipelineError> {
    match &cfg.stopwords {
        Some(p) => load_stopwords(p).map_err(|e| PipelineError::Config(e.to_string())),
        None => Ok(default_english_stopwords()),
    }
}

/// Tokenizes the documents, builds the vocabulary and segments every
/// document.
pub fn build_corpus(
    docs: &[ingest::Document],
    stopwords: &HashSet<String>,
    cfg: &PipelineConfig,
) -> Result<Corpus, TextprepError> {
    let tokens: Vec<_> = docs.iter().map(|d| tokenize(&d.text)).collect();
    let t = &cfg.textprep;
    let vocab = build_vocabulary(&tokens, t.min_count, t.max_doc_fraction, stopwords)?;
    let documents = docs
        .iter()
        .zip(&tokens)
        .map(|(d, toks)| segment(&d.doc_id, toks, &vocab, t.target_len))
        .collect();
    Ok(Corpus { vocab, documents })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainOptions {
    pub seed: u64,
    /// Overrides the configured topic count.
    pub k: Option<usize>,
    /// Overrides the configured backend.
    pub backend: Option<Backend>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainReport {
    pub model_id: String,
    /// True when an identical model was registered before; nothing was
    /// written.
    pub already_registered: bool,
    pub documents: usize,
    pub paragraphs: usize,
}

fn entries_for(
    docs: &[ingest::Document],
    corpus: &Corpus,
    thetas: &[TopicDistribution],
    model_id: &str,
    k: usize,
) -> Result<Vec<StoredEntry>, PipelineError> {
    let mut it = thetas.iter();
    docs.iter()
        .zip(&corpus.documents)
        .map(|(doc, paragraphs)| {
            let detail: Vec<ParagraphTopics> = paragraphs
                .iter()
                .map(|p| ParagraphTopics {
                    index: p.index,
                    token_count: p.token_ids.len() as u64,
                    theta: it.next().expect("one theta per paragraph").clone(),
                })
                .collect();
            document_entry(doc, model_id, k, detail)
        })
        .collect()
}

fn document_entry(
    doc: &ingest::Document,
    model_id: &str,
    k: usize,
    detail: Vec<ParagraphTopics>,
) -> Result<StoredEntry, PipelineError> {
    let thetas: Vec<TopicDistribution> = detail.iter().map(|p| p.theta.clone()).collect();
    let weights: Vec<u64> = detail.iter().map(|p| p.token_count).collect();
    let theta =
        aggregate_document(k, &thetas, &weights).map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(entry_for(doc, model_id, theta, detail))
}

/// Trains a model on every active document, registers it as staged and
/// stores one entry per document. Training is deterministic in the seed:
/// the same store, configuration and seed give the same model id, in which
/// case the existing registration is reported instead of a duplicate.
pub fn train(
    cfg: &PipelineConfig,
    opts: &TrainOptions,
    now: DateTime<Utc>,
    progress: &mut dyn Write,
) -> Result<TrainReport, PipelineError> {
    let backend = opts.backend.unwrap_or(cfg.backend);
    let k = opts.k.unwrap_or(cfg.lda.k);
    if k < 1 {
        return Err(PipelineError::Config("k must be at least 1".into()));
    }
    let embeddings_path = match backend {
        Backend::Hybrid => Some(cfg.hybrid.embeddings.clone().ok_or_else(|| {
            PipelineError::Config("missing field `hybrid.embeddings` (required by --backend hybrid)".into())
        })?),
        Backend::Lda => None,
    };
    let stopwords = stopwords(cfg)?;
    let store = open_store(cfg)?;
    let docs = store.documents(crate::store::EntryStatus::Active, None)?;
    if docs.is_empty() {
        return Err(PipelineError::Data("empty corpus: the store holds no active documents".into()));
    }
    let corpus = build_corpus(&docs, &stopwords, cfg).map_err(|e| match e {
        TextprepError::InvalidParameters(m) => PipelineError::Config(m),
        other => PipelineError::Data(other.to_string()),
    })?;
    let paragraphs: Vec<&[u32]> = corpus
        .documents
        .iter()
        .flatten()
        .map(|p| p.token_ids.as_slice())
        .collect();
    let _ = writeln!(
        progress,
        "training {} model: K={k} documents={} paragraphs={} vocabulary={}",
        backend.as_str(),
        docs.len(),
        paragraphs.len(),
        corpus.vocab.len()
    );

    let (model_bytes, model_id, thetas, snapshot) = match backend {
        Backend::Lda => {
            let mut lc = LdaConfig::new(k, opts.seed);
            lc.alpha = cfg.lda.alpha.unwrap_or(lc.alpha);
            lc.beta = cfg.lda.beta;
            lc.iterations = cfg.lda.iterations;
            lc.burn_in = cfg.lda.burn_in;
            let fit = lda::train(&paragraphs, VocabRef::from(&corpus.vocab), &lc).map_err(|e| match e {
                LdaError::InvalidConfig(m) => PipelineError::Config(m),
                other => PipelineError::Data(other.to_string()),
            })?;
            let snapshot = serde_json::json!({ "lda": lc, "textprep": cfg.textprep });
            (fit.model.to_bytes(), fit.model.model_id().to_string(), fit.thetas, snapshot)
        }
        Backend::Hybrid => {
            let path = embeddings_path.expect("checked above");
            let table = hybrid::load_embeddings(&path, &corpus.vocab).map_err(|e| match e {
                HybridError::Io(e) => PipelineError::Config(format!("hybrid.embeddings: {e}")),
                other => PipelineError::Data(format!("hybrid.embeddings: {other}")),
            })?;
            let hc = cfg.hybrid.train_config(opts.seed);
            let model = hybrid::train_hybrid(&paragraphs, &table, k, &hc).map_err(|e| match e {
                HybridError::InvalidConfig(m) => PipelineError::Config(m),
                other => PipelineError::Data(other.to_string()),
            })?;
            let thetas = (0..paragraphs.len())
                .map(|i| hybrid::doc_topics_hybrid(&model, i))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| PipelineError::Data(e.to_string()))?;
            let snapshot = serde_json::json!({
                "hybrid": hc,
                "textprep": cfg.textprep,
                "embedding_dim": table.dim(),
            });
            (model.to_bytes(), model.model_id(), thetas, snapshot)
        }
    };

    if store.model(&model_id)?.is_some() {
        let _ = writeln!(progress, "model {model_id} is already registered");
        return Ok(TrainReport {
            model_id,
            already_registered: true,
            documents: docs.len(),
            paragraphs: paragraphs.len(),
        });
    }
    let record = ModelRecord {
        model_id: model_id.clone(),
        backend,
        k,
        created_at: now,
        config: snapshot,
        vocab_version: corpus.vocab.version(),
        artifact_path: String::new(),
        status: ModelStatus::Staged,
        checksum: None,
    };
    let artifacts = ModelArtifacts {
        model: model_bytes,
        vocab: corpus.vocab.to_bytes(),
    };
    let entries = entries_for(&docs, &corpus, &thetas, &model_id, k)?;
    store.in_transaction(|s| {
        s.register_model(&record, &artifacts)?;
        s.put_entries(&entries)
    })?;
    Ok(TrainReport {
        model_id,
        already_registered: false,
        documents: docs.len(),
        paragraphs: paragraphs.len(),
    })
}

use crate::store::EntryReader;

/// Seed of one paragraph during folding-in.
pub fn paragraph_seed(seed: u64, doc_id: &str, index: usize) -> u64 {
    derive_seed(seed, &[doc_id.as_bytes(), &(index as u64).to_le_bytes()])
}

/// Folding-in settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InferSettings {
    pub target_len: usize,
    pub lda_iterations: usize,
    pub hybrid_epochs: usize,
}

/// Segments a document against the model's vocabulary and folds in every
/// paragraph. Hybrid paragraphs with fewer than two embedded tokens are
/// left out of the document mixture.
pub fn infer_document(
    model: &LoadedModel,
    vocab: &Vocabulary,
    doc: &ingest::Document,
    settings: InferSettings,
    seed: u64,
) -> Result<Vec<ParagraphTopics>, PipelineError> {
    let tokens = tokenize(&doc.text);
    let mut out = Vec::new();
    for p in segment(&doc.doc_id, &tokens, vocab, settings.target_len) {
        let s = paragraph_seed(seed, &doc.doc_id, p.index);
        let theta = match model {
            LoadedModel::Lda(m) => match lda::infer(m, &p.token_ids, settings.lda_iterations, s) {
                Ok(t) => t,
                Err(LdaError::EmptyParagraph) => continue,
                Err(e) => return Err(PipelineError::Data(e.to_string())),
            },
            LoadedModel::Hybrid(m) => {
                match hybrid::infer_hybrid(m, &p.token_ids, settings.hybrid_epochs, s) {
                    Ok(t) => t,
                    Err(HybridError::EmptyParagraph) => continue,
                    Err(e) => return Err(PipelineError::Data(e.to_string())),
                }
            }
        };
        out.push(ParagraphTopics {
            index: p.index,
            token_count: p.token_ids.len() as u64,
            theta,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InferOptions {
    pub model_id: String,
    pub seed: u64,
    /// Only documents timestamped at or after this instant.
    pub since: Option<DateTime<Utc>>,
}

/// Folds every active document lacking an entry under a released model into
/// it and stores the entries. Returns the number of new entries; a second
/// run over an unchanged store returns 0.
pub fn infer(cfg: &PipelineConfig, opts: &InferOptions) -> Result<usize, PipelineError> {
    let store = open_store(cfg)?;
    let record = store
        .model(&opts.model_id)?
        .ok_or_else(|| PipelineError::Data(format!("unknown model {}", opts.model_id)))?;
    if record.status != ModelStatus::Released {
        return Err(PipelineError::Data(format!(
            "model {} is {}, not released",
            opts.model_id, record.status
        )));
    }
    let (record, model, vocab) = store.load_model(&opts.model_id)?;
    let settings = InferSettings {
        target_len: record.config["textprep"]["target_len"]
            .as_u64()
            .map_or(cfg.textprep.target_len, |v| v as usize),
        lda_iterations: cfg.lda.infer_iterations,
        hybrid_epochs: cfg.hybrid.infer_epochs,
    };
    let docs = store.documents_without_entry(&opts.model_id, opts.since)?;
    let entries = docs
        .iter()
        .map(|doc| {
            let detail = infer_document(&model, &vocab, doc, settings, opts.seed)?;
            document_entry(doc, &opts.model_id, record.k, detail)
        })
        .collect::<Result<Vec<_>, _>>()?;
    store.put_entries(&entries)?;
    Ok(entries.len())
}

pub fn release(cfg: &PipelineConfig, model_id: &str) -> Result<ModelRecord, PipelineError> {
    Ok(open_store(cfg)?.release_model(model_id)?)
}

/// Writes the model's entries as newline-delimited JSON to `out` (`-` for
/// standard output). Returns the line count.
pub fn export(cfg: &PipelineConfig, model_id: &str, out: &Path) -> Result<usize, PipelineError> {
    let store = open_store(cfg)?;
    if out == Path::new("-") {
        let stdout = std::io::stdout();
        return Ok(store.export_entries(model_id, stdout.lock())?);
    }
    let file = std::fs::File::create(out)
        .map_err(|e| PipelineError::Runtime(format!("{}: {e}", out.display())))?;
    Ok(store.export_entries(model_id, std::io::BufWriter::new(file))?)
}
