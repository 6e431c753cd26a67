//! Read-only HTTP API over a store.
//!
//! Every endpoint is a thin wrapper over a library function of this module
//! ([`list_models`], [`topics`], [`rollup_query`], [`document`],
//! [`compare_queries`]), so a response decodes to exactly what the function
//! returns for the same store. Responses are JSON; floats use the shortest
//! decimal that round-trips, the same encoding as the store. Errors are
//! `{"code": ..., "message": ...}`.
//!
//! | Endpoint | Query parameters |
//! |---|---|
//! | `GET /api/models` | none |
//! | `GET /api/topics` | `model_id` |
//! | `GET /api/rollup` | `model_id`, `persons`, `parties`, `platforms`, `from`, `to`, `bucket`, `weighting` |
//! | `GET /api/documents/{doc_id}` | `model_id` |
//! | `GET /api/compare` | `left`, `right` (each a URL-encoded rollup query) |
//!
//! `model_id` falls back to the configured default model. List parameters
//! are comma separated.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path as UrlPath, RawQuery, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::aggregate::{
    compare_rollups, rollup, Bucket, DivergencePoint, RollupQuery, RollupResult, TopicLabels,
    Weighting,
};
use crate::cli::PipelineConfig;
use crate::ingest::{parse_instant, Platform};
use crate::lda;
use crate::hybrid;
use crate::store::{
    Backend, EntryFilter, EntryReader, EntryStatus, LoadedModel, ModelRecord, ModelStatus, Page,
    ParagraphTopics, Store, StoreError,
};
use crate::TopicDistribution;

/// Words listed per topic by `/api/topics`.
pub const TOP_WORDS: usize = 10;

/// Upper bound on the buckets of one rollup.
pub const MAX_BUCKETS: usize = 100_000;

/// An API failure with its HTTP status.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

/// Wire form of an error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            code: "bad_request",
            message: message.into(),
        }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: "not_found",
            message: message.into(),
        }
    }

    pub fn unknown_model(model_id: &str) -> Self {
        Self {
            status: StatusCode::NOT_FOUND,
            code: "unknown_model",
            message: format!("no released model {model_id}"),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            code: "internal",
            message: message.into(),
        }
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

/// Resolved service settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiConfig {
    pub bind: String,
    pub port: u16,
    pub store: PathBuf,
    pub default_model: Option<String>,
    pub cors_allow: Vec<String>,
    pub topic_labels: TopicLabels,
}

/// Command-line values, which take precedence over the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ApiOverrides {
    pub bind: Option<String>,
    pub port: Option<u16>,
    pub store: Option<PathBuf>,
    pub default_model: Option<String>,
    pub cors_allow: Option<Vec<String>>,
    pub topic_labels: Option<PathBuf>,
}

/// Environment variables read by [`ApiConfig::resolve`].
pub const ENV_VARS: [&str; 6] = [
    "MUSTAS_BIND",
    "MUSTAS_PORT",
    "MUSTAS_STORE",
    "MUSTAS_DEFAULT_MODEL",
    "MUSTAS_CORS_ALLOW",
    "MUSTAS_TOPIC_LABELS",
];

impl ApiConfig {
    /// Flags override the environment, which overrides the `[service]`
    /// section of the file.
    pub fn resolve(
        file: &PipelineConfig,
        flags: &ApiOverrides,
        env: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, String> {
        let s = &file.service;
        let port = match (flags.port, env("MUSTAS_PORT")) {
            (Some(p), _) => p,
            (None, Some(v)) => v
                .trim()
                .parse::<u16>()
                .map_err(|_| format!("MUSTAS_PORT: invalid port `{v}`"))?,
            (None, None) => s.port,
        };
        if port == 0 {
            return Err("port must lie in 1..65535".into());
        }
        let labels_path = flags
            .topic_labels
            .clone()
            .or_else(|| env("MUSTAS_TOPIC_LABELS").map(PathBuf::from))
            .or_else(|| s.topic_labels.clone());
        let topic_labels = match labels_path {
            Some(p) => TopicLabels::load(&p)?,
            None => TopicLabels::default(),
        };
        let cors_allow = flags
            .cors_allow
            .clone()
            .or_else(|| env("MUSTAS_CORS_ALLOW").map(|v| split_list(&v)))
            .unwrap_or_else(|| s.cors_allow.clone());
        Ok(Self {
            bind: flags
                .bind
                .clone()
                .or_else(|| env("MUSTAS_BIND"))
                .unwrap_or_else(|| s.bind.clone()),
            port,
            store: flags
                .store
                .clone()
                .or_else(|| env("MUSTAS_STORE").map(PathBuf::from))
                .unwrap_or_else(|| file.store.clone()),
            default_model: flags
                .default_model
                .clone()
                .or_else(|| env("MUSTAS_DEFAULT_MODEL"))
                .or_else(|| s.default_model.clone()),
            cors_allow,
            topic_labels,
        })
    }

    /// Checks the settings against the store: it must exist and the default
    /// model, if any, must be released.
    pub fn check(&self) -> Result<(), String> {
        let store = Store::open_read_only(&self.store).map_err(|e| e.to_string())?;
        if let Some(id) = &self.default_model {
            match store.model(id).map_err(|e| e.to_string())? {
                Some(r) if r.status == ModelStatus::Released => {}
                Some(r) => return Err(format!("default model {id} is {}, not released", r.status)),
                None => return Err(format!("default model {id} is not registered")),
            }
        }
        for origin in &self.cors_allow {
            HeaderValue::from_str(origin).map_err(|_| format!("invalid CORS origin `{origin}`"))?;
        }
        Ok(())
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Summary of a released model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub backend: Backend,
    pub k: usize,
    pub created_at: DateTime<Utc>,
    pub vocab_version: String,
    pub status: ModelStatus,
}

impl From<&ModelRecord> for ModelSummary {
    fn from(r: &ModelRecord) -> Self {
        Self {
            model_id: r.model_id.clone(),
            backend: r.backend,
            k: r.k,
            created_at: r.created_at,
            vocab_version: r.vocab_version.clone(),
            status: r.status,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsResponse {
    pub models: Vec<ModelSummary>,
}

/// Released models, newest first.
pub fn list_models(store: &Store) -> Result<ModelsResponse, ApiError> {
    let models = store
        .list_models()?
        .iter()
        .filter(|r| r.status == ModelStatus::Released)
        .map(ModelSummary::from)
        .collect();
    Ok(ModelsResponse { models })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicWord {
    pub word: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub topic: usize,
    pub words: Vec<TopicWord>,
    /// Names of the label sets containing this topic.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsResponse {
    pub model_id: String,
    pub backend: Backend,
    pub k: usize,
    pub topics: Vec<TopicSummary>,
    pub labels: BTreeMap<String, BTreeSet<usize>>,
}

fn released(store: &Store, model_id: &str) -> Result<ModelRecord, ApiError> {
    match store.model(model_id)? {
        Some(r) if r.status == ModelStatus::Released => Ok(r),
        _ => Err(ApiError::unknown_model(model_id)),
    }
}

/// Top words of every topic of a released model, with its label sets.
pub fn topics(store: &Store, labels: &TopicLabels, model_id: &str) -> Result<TopicsResponse, ApiError> {
    released(store, model_id)?;
    let (record, model, vocab) = store.load_model(model_id)?;
    let sets = labels.for_model(model_id);
    let topics = (0..record.k)
        .map(|t| {
            let words = match &model {
                LoadedModel::Lda(m) => {
                    lda::top_words(m, &vocab, t, TOP_WORDS).map_err(|e| ApiError::internal(e.to_string()))?
                }
                LoadedModel::Hybrid(m) => hybrid::topic_words_hybrid(m, &vocab, t, TOP_WORDS)
                    .map_err(|e| ApiError::internal(e.to_string()))?,
            };
            Ok(TopicSummary {
                topic: t,
                words: words
                    .into_iter()
                    .map(|(word, weight)| TopicWord { word, weight })
                    .collect(),
                labels: sets
                    .iter()
                    .filter(|(_, ids)| ids.contains(&t))
                    .map(|(name, _)| name.clone())
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>, ApiError>>()?;
    Ok(TopicsResponse {
        model_id: record.model_id,
        backend: record.backend,
        k: record.k,
        topics,
        labels: sets,
    })
}

fn too_many_buckets(q: &RollupQuery) -> bool {
    let mut b = q.bucket.floor(q.start);
    for _ in 0..MAX_BUCKETS {
        if b >= q.end {
            return false;
        }
        b = q.bucket.next(b);
    }
    b < q.end
}

/// Rollup of a released model's entries.
pub fn rollup_query(store: &Store, q: &RollupQuery) -> Result<RollupResult, ApiError> {
    q.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    if too_many_buckets(q) {
        return Err(ApiError::bad_request(format!(
            "the range spans more than {MAX_BUCKETS} buckets"
        )));
    }
    let record = released(store, &q.model_id)?;
    let entries = store.query_entries(&EntryFilter::from(q), Page::ALL)?;
    rollup(&entries, record.k, q).map_err(|e| ApiError::internal(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareResponse {
    pub left: RollupResult,
    pub right: RollupResult,
    pub series: Vec<DivergencePoint>,
}

/// Both rollups and their per-bucket divergence.
pub fn compare_queries(
    store: &Store,
    left: &RollupQuery,
    right: &RollupQuery,
) -> Result<CompareResponse, ApiError> {
    let l = rollup_query(store, left)?;
    let r = rollup_query(store, right)?;
    let series = compare_rollups(&l, &r).map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(CompareResponse {
        left: l,
        right: r,
        series,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentResponse {
    pub doc_id: String,
    pub person_id: String,
    pub person_name: String,
    pub party: String,
    pub platform: Platform,
    pub timestamp: DateTime<Utc>,
    pub source_url: String,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
    pub model_id: Option<String>,
    /// `None` when the document has no entry under the model yet.
    pub theta: Option<TopicDistribution>,
    pub paragraphs: Option<Vec<ParagraphTopics>>,
}

/// An active document with its topic mixture under `model_id`.
pub fn document(
    store: &Store,
    doc_id: &str,
    model_id: Option<&str>,
) -> Result<DocumentResponse, ApiError> {
    let rec = match store.get_document(doc_id)? {
        Some(r) if r.status == EntryStatus::Active => r,
        _ => return Err(ApiError::not_found(format!("no document {doc_id}"))),
    };
    let entry = match model_id {
        Some(m) => {
            released(store, m)?;
            store.get_entry(doc_id, m)?
        }
        None => None,
    };
    let d = rec.document;
    let (theta, paragraphs) = match entry {
        Some(e) => (Some(e.theta), e.paragraphs),
        None => (None, None),
    };
    Ok(DocumentResponse {
        doc_id: d.doc_id,
        person_id: d.person.id,
        person_name: d.person.display_name,
        party: d.party,
        platform: d.platform,
        timestamp: d.timestamp,
        source_url: d.source_url,
        text: d.text,
        metadata: d.metadata,
        model_id: model_id.map(String::from),
        theta,
        paragraphs,
    })
}

/// Decoded `key=value` pairs of a query string; repeated or unknown keys
/// are rejected.
fn parse_params(raw: Option<&str>, allowed: &[&str]) -> Result<BTreeMap<String, String>, ApiError> {
    let mut out = BTreeMap::new();
    for (k, v) in url::form_urlencoded::parse(raw.unwrap_or("").as_bytes()) {
        if !allowed.contains(&k.as_ref()) {
            return Err(ApiError::bad_request(format!("unknown parameter `{k}`")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(ApiError::bad_request(format!("parameter `{k}` given twice")));
        }
    }
    Ok(out)
}

fn model_param(
    params: &BTreeMap<String, String>,
    default: Option<&str>,
) -> Result<String, ApiError> {
    match params.get("model_id").map(String::as_str) {
        Some(m) if !m.is_empty() => Ok(m.to_string()),
        _ => default
            .map(String::from)
            .ok_or_else(|| ApiError::bad_request("model_id is required (no default model)")),
    }
}

const ROLLUP_PARAMS: [&str; 8] = [
    "model_id", "persons", "parties", "platforms", "from", "to", "bucket", "weighting",
];

fn set_param(params: &BTreeMap<String, String>, key: &str) -> Option<BTreeSet<String>> {
    params
        .get(key)
        .map(|v| split_list(v).into_iter().collect::<BTreeSet<_>>())
        .filter(|s| !s.is_empty())
}

/// Parses a rollup query string. Empty lists mean no filter; `bucket`
/// defaults to `month` and `weighting` to `tokens`.
pub fn parse_rollup_query(raw: &str, default_model: Option<&str>) -> Result<RollupQuery, ApiError> {
    let params = parse_params(Some(raw), &ROLLUP_PARAMS)?;
    let model_id = model_param(&params, default_model)?;
    let instant = |key: &str| -> Result<DateTime<Utc>, ApiError> {
        let v = params
            .get(key)
            .ok_or_else(|| ApiError::bad_request(format!("`{key}` is required")))?;
        parse_instant(v).ok_or_else(|| ApiError::bad_request(format!("invalid `{key}`: `{v}`")))
    };
    let start = instant("from")?;
    let end = instant("to")?;
    let bucket = match params.get("bucket") {
        Some(b) => b.parse::<Bucket>().map_err(ApiError::bad_request)?,
        None => Bucket::Month,
    };
    let weighting = match params.get("weighting") {
        Some(w) => w.parse::<Weighting>().map_err(ApiError::bad_request)?,
        None => Weighting::Tokens,
    };
    let platforms = match set_param(&params, "platforms") {
        Some(names) => Some(
            names
                .iter()
                .map(|n| n.parse::<Platform>())
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(|e| ApiError::bad_request(e.to_string()))?,
        ),
        None => None,
    };
    let q = RollupQuery {
        model_id,
        persons: set_param(&params, "persons"),
        parties: set_param(&params, "parties"),
        platforms,
        start,
        end,
        bucket,
        weighting,
    };
    q.validate().map_err(|e| ApiError::bad_request(e.to_string()))?;
    Ok(q)
}

struct AppState {
    config: ApiConfig,
}

type Shared = Arc<AppState>;

async fn with_store<T, F>(state: &Shared, f: F) -> Result<Json<T>, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&Store, &ApiConfig) -> Result<T, ApiError> + Send + 'static,
{
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || {
        let store = Store::open_read_only(&state.config.store)?;
        f(&store, &state.config)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
    .map(Json)
}

async fn models_handler(
    State(state): State<Shared>,
    RawQuery(raw): RawQuery,
) -> Result<Json<ModelsResponse>, ApiError> {
    parse_params(raw.as_deref(), &[])?;
    with_store(&state, |s, _| list_models(s)).await
}

async fn topics_handler(
    State(state): State<Shared>,
    RawQuery(raw): RawQuery,
) -> Result<Json<TopicsResponse>, ApiError> {
    let params = parse_params(raw.as_deref(), &["model_id"])?;
    let model_id = model_param(&params, state.config.default_model.as_deref())?;
    with_store(&state, move |s, c| topics(s, &c.topic_labels, &model_id)).await
}

async fn rollup_handler(
    State(state): State<Shared>,
    RawQuery(raw): RawQuery,
) -> Result<Json<RollupResult>, ApiError> {
    let q = parse_rollup_query(raw.as_deref().unwrap_or(""), state.config.default_model.as_deref())?;
    with_store(&state, move |s, _| rollup_query(s, &q)).await
}

async fn document_handler(
    State(state): State<Shared>,
    UrlPath(doc_id): UrlPath<String>,
    RawQuery(raw): RawQuery,
) -> Result<Json<DocumentResponse>, ApiError> {
    let params = parse_params(raw.as_deref(), &["model_id"])?;
    let model_id = params
        .get("model_id")
        .filter(|m| !m.is_empty())
        .cloned()
        .or_else(|| state.config.default_model.clone());
    with_store(&state, move |s, _| document(s, &doc_id, model_id.as_deref())).await
}

async fn compare_handler(
    State(state): State<Shared>,
    RawQuery(raw): RawQuery,
) -> Result<Json<CompareResponse>, ApiError> {
    let params = parse_params(raw.as_deref(), &["left", "right"])?;
    let default = state.config.default_model.as_deref();
    let side = |key: &str| -> Result<RollupQuery, ApiError> {
        let v = params
            .get(key)
            .ok_or_else(|| ApiError::bad_request(format!("`{key}` is required")))?;
        parse_rollup_query(v, default).map_err(|e| ApiError {
            message: format!("{key}: {}", e.message),
            ..e
        })
    };
    let (left, right) = (side("left")?, side("right")?);
    with_store(&state, move |s, _| compare_queries(s, &left, &right)).await
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

/// The API router, including the CORS layer.
pub fn router(config: ApiConfig) -> Router {
    let origins: Vec<HeaderValue> = config
        .cors_allow
        .iter()
        .filter_map(|o| HeaderValue::from_str(o).ok())
        .collect();
    let cors = CorsLayer::new()
        .allow_methods([Method::GET])
        .allow_origin(AllowOrigin::list(origins));
    Router::new()
        .route("/api/models", get(models_handler))
        .route("/api/topics", get(topics_handler))
        .route("/api/rollup", get(rollup_handler))
        .route("/api/documents/:doc_id", get(document_handler))
        .route("/api/compare", get(compare_handler))
        .fallback(fallback)
        .layer(cors)
        .with_state(Arc::new(AppState { config }))
}

/// Binds the listener, reporting an occupied port by number.
pub async fn bind(config: &ApiConfig) -> Result<tokio::net::TcpListener, String> {
    let addr = format!("{}:{}", config.bind, config.port);
    tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|e| format!("cannot listen on {addr} (port {}): {e}", config.port))
}

/// Serves until the task is cancelled or the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, config: ApiConfig) -> Result<(), String> {
    axum::serve(listener, router(config))
        .await
        .map_err(|e| e.to_string())
}

/// Checks the configuration, binds and serves until interrupted.
pub fn serve_blocking(config: ApiConfig, log: &mut dyn Write) -> Result<(), String> {
    config.check()?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = bind(&config).await?;
        let addr: SocketAddr = listener.local_addr().map_err(|e| e.to_string())?;
        let _ = writeln!(log, "listening on http://{addr}");
        axum::serve(listener, router(config))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| e.to_string())
    })
}
