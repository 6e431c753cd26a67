//! Paragraph-to-document aggregation, time-bucketed rollups and
//! distribution comparison.
//!
//! All sums run in a fixed order (entries sorted by `doc_id`) so results are
//! bit-reproducible: two rollups over the same entries agree exactly, no
//! matter in which order the entries were supplied.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Days, Months, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Platform;
use crate::store::{EntryStatus, StoredEntry};
use crate::TopicDistribution;

#[derive(Debug, Error, PartialEq)]
pub enum AggregateError {
    #[error("{thetas} paragraph distributions but {weights} weights")]
    LengthMismatch { thetas: usize, weights: usize },
    #[error("paragraph {0} has a zero weight")]
    ZeroWeight(usize),
    #[error("distribution has {found} topics, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry {doc_id} belongs to model {found}, query is for {expected}")]
    ModelMismatch {
        doc_id: String,
        expected: String,
        found: String,
    },
    #[error("topic {topic} out of range for a {k}-topic model")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("cannot compare rollups: {0}")]
    Incomparable(String),
}

/// Topic mixture of one document under one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentTopics {
    pub doc_id: String,
    pub model_id: String,
    pub theta: TopicDistribution,
    /// Zero only for the uniform fallback of a document without paragraphs.
    pub paragraph_count: usize,
    pub token_count: u64,
}

impl DocumentTopics {
    pub fn from_paragraphs(
        doc_id: &str,
        model_id: &str,
        k: usize,
        thetas: &[TopicDistribution],
        weights: &[u64],
    ) -> Result<Self, AggregateError> {
        Ok(Self {
            doc_id: doc_id.to_string(),
            model_id: model_id.to_string(),
            theta: aggregate_document(k, thetas, weights)?,
            paragraph_count: thetas.len(),
            token_count: weights.iter().sum(),
        })
    }
}

/// Token-weighted mean of paragraph distributions, renormalized.
///
/// A document without paragraphs gets the uniform distribution over `k`.
pub fn aggregate_document(
    k: usize,
    thetas: &[TopicDistribution],
    weights: &[u64],
) -> Result<TopicDistribution, AggregateError> {
    if thetas.len() != weights.len() {
        return Err(AggregateError::LengthMismatch {
            thetas: thetas.len(),
            weights: weights.len(),
        });
    }
    if thetas.is_empty() {
        return Ok(TopicDistribution::uniform(k));
    }
    let mut acc = vec![0.0; k];
    let mut total = 0.0;
    for (i, (theta, &w)) in thetas.iter().zip(weights).enumerate() {
        if theta.k() != k {
            return Err(AggregateError::DimensionMismatch {
                expected: k,
                found: theta.k(),
            });
        }
        if w == 0 {
            return Err(AggregateError::ZeroWeight(i));
        }
        let w = w as f64;
        for (a, p) in acc.iter_mut().zip(theta.as_slice()) {
            *a += w * p;
        }
        total += w;
    }
    if let [only] = thetas {
        return Ok(only.clone());
    }
    for a in &mut acc {
        *a /= total;
    }
    TopicDistribution::from_weights(acc)
        .map_err(|e| AggregateError::InvalidDistribution(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    Day,
    /// ISO weeks, starting on Monday.
    Week,
    Month,
    Quarter,
    Year,
}

impl Bucket {
    pub fn as_str(self) -> &'static str {
        match self {
            Bucket::Day => "day",
            Bucket::Week => "week",
            Bucket::Month => "month",
            Bucket::Quarter => "quarter",
            Bucket::Year => "year",
        }
    }

    /// Start of the UTC calendar bucket containing `t`.
    pub fn floor(self, t: DateTime<Utc>) -> DateTime<Utc> {
        let d = t.date_naive();
        let start = match self {
            Bucket::Day => d,
            Bucket::Week => d - Days::new(u64::from(d.weekday().num_days_from_monday())),
            Bucket::Month => d.with_day(1).expect("first of month"),
            Bucket::Quarter => {
                NaiveDate::from_ymd_opt(d.year(), (d.month0() / 3) * 3 + 1, 1).expect("quarter start")
            }
            Bucket::Year => NaiveDate::from_ymd_opt(d.year(), 1, 1).expect("new year"),
        };
        start.and_hms_opt(0, 0, 0).expect("midnight").and_utc()
    }

    /// Start of the bucket after the one starting at `start`.
    pub fn next(self, start: DateTime<Utc>) -> DateTime<Utc> {
        match self {
            Bucket::Day => start + Days::new(1),
            Bucket::Week => start + Days::new(7),
            Bucket::Month => start + Months::new(1),
            Bucket::Quarter => start + Months::new(3),
            Bucket::Year => start + Months::new(12),
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Bucket {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Bucket::Day, Bucket::Week, Bucket::Month, Bucket::Quarter, Bucket::Year]
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| format!("unknown bucket `{s}`"))
    }
}

/// How documents are weighted inside a bucket.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every document counts with its token count.
    #[default]
    Tokens,
    /// Every person counts equally; within a person, documents count with
    /// their token counts.
    PersonEqual,
}

impl FromStr for Weighting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tokens" => Ok(Weighting::Tokens),
            "person_equal" => Ok(Weighting::PersonEqual),
            _ => Err(format!("unknown weighting `{s}`")),
        }
    }
}

/// Filters and bucketing of a rollup. `None` filters match everything; the
/// time range is half-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollupQuery {
    pub model_id: String,
    pub persons: Option<BTreeSet<String>>,
    pub parties: Option<BTreeSet<String>>,
    pub platforms: Option<BTreeSet<Platform>>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub bucket: Bucket,
    #[serde(default)]
    pub weighting: Weighting,
}

impl RollupQuery {
    pub fn new(model_id: &str, start: DateTime<Utc>, end: DateTime<Utc>, bucket: Bucket) -> Self {
        Self {
            model_id: model_id.to_string(),
            persons: None,
            parties: None,
            platforms: None,
            start,
            end,
            bucket,
            weighting: Weighting::Tokens,
        }
    }

    pub fn validate(&self) -> Result<(), AggregateError> {
        if self.start >= self.end {
            return Err(AggregateError::InvalidQuery(format!(
                "start {} is not before end {}",
                self.start, self.end
            )));
        }
        Ok(())
    }

    /// True when the entry passes every filter (model and status aside).
    pub fn matches(&self, e: &StoredEntry) -> bool {
        self.persons.as_ref().is_none_or(|s| s.contains(&e.person_id))
            && self.parties.as_ref().is_none_or(|s| s.contains(&e.party))
            && self.platforms.as_ref().is_none_or(|s| s.contains(&e.platform))
            && e.timestamp >= self.start
            && e.timestamp < self.end
    }

    /// Bucket starts covering the query range, in order.
    pub fn bucket_starts(&self) -> Vec<DateTime<Utc>> {
        let mut out = Vec::new();
        let mut b = self.bucket.floor(self.start);
        while b < self.end {
            out.push(b);
            b = self.bucket.next(b);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollupBucket {
    pub start: DateTime<Utc>,
    /// Length K. All zeros when the bucket holds no documents.
    pub topic_share: Vec<f64>,
    pub document_count: usize,
    pub token_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollupResult {
    pub model_id: String,
    pub bucket: Bucket,
    pub k: usize,
    pub buckets: Vec<RollupBucket>,
}

/// Weighted mean of `(weight, theta)` terms in the given order: the sum of
/// `weight * theta` divided by the sum of weights. Equal weights replace
/// all-zero ones.
fn weighted_mean(k: usize, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let total: f64 = terms.iter().map(|(w, _)| w).sum();
    let equal = total <= 0.0;
    let mut acc = vec![0.0; k];
    for (w, theta) in terms {
        let w = if equal { 1.0 } else { *w };
        for (a, p) in acc.iter_mut().zip(theta.iter()) {
            *a += w * p;
        }
    }
    let denom = if equal { terms.len() as f64 } else { total };
    for a in &mut acc {
        *a /= denom;
    }
    acc
}

fn bucket_share(k: usize, docs: &mut [&StoredEntry], weighting: Weighting) -> Vec<f64> {
    docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    match weighting {
        Weighting::Tokens => {
            let terms: Vec<(f64, &[f64])> = docs
                .iter()
                .map(|e| (e.token_count as f64, e.theta.as_slice()))
                .collect();
            weighted_mean(k, &terms)
        }
        Weighting::PersonEqual => {
            let mut by_person: BTreeMap<&str, Vec<&StoredEntry>> = BTreeMap::new();
            for e in docs.iter() {
                by_person.entry(e.person_id.as_str()).or_default().push(e);
            }
            let person_shares: Vec<Vec<f64>> = by_person
                .values()
                .map(|es| {
                    let terms: Vec<(f64, &[f64])> = es
                        .iter()
                        .map(|e| (e.token_count as f64, e.theta.as_slice()))
                        .collect();
                    weighted_mean(k, &terms)
                })
                .collect();
            let terms: Vec<(f64, &[f64])> =
                person_shares.iter().map(|s| (1.0, s.as_slice())).collect();
            weighted_mean(k, &terms)
        }
    }
}

/// Groups matching active entries into the query's UTC buckets and averages
/// their document distributions.
///
/// Every entry must carry `q.model_id`; quarantined entries are ignored.
/// Within a bucket the entries are summed in `doc_id` order, so the result
/// does not depend on the input order.
pub fn rollup<'a, I>(entries: I, k: usize, q: &RollupQuery) -> Result<RollupResult, AggregateError>
where
    I: IntoIterator<Item = &'a StoredEntry>,
{
    q.validate()?;
    let starts = q.bucket_starts();
    let mut grouped: Vec<Vec<&StoredEntry>> = vec![Vec::new(); starts.len()];
    for e in entries {
        if e.model_id != q.model_id {
            return Err(AggregateError::ModelMismatch {
                doc_id: e.doc_id.clone(),
                expected: q.model_id.clone(),
                found: e.model_id.clone(),
            });
        }
        if e.status != EntryStatus::Active || !q.matches(e) {
            continue;
        }
        if e.theta.k() != k {
            return Err(AggregateError::DimensionMismatch {
                expected: k,
                found: e.theta.k(),
            });
        }
        let b = q.bucket.floor(e.timestamp);
        let idx = starts.partition_point(|s| *s < b);
        grouped[idx].push(e);
    }
    let buckets = starts
        .into_iter()
        .zip(grouped)
        .map(|(start, mut docs)| {
            if docs.is_empty() {
                return RollupBucket {
                    start,
                    topic_share: vec![0.0; k],
                    document_count: 0,
                    token_count: 0,
                };
            }
            RollupBucket {
                start,
                topic_share: bucket_share(k, &mut docs, q.weighting),
                document_count: docs.len(),
                token_count: docs.iter().map(|e| e.token_count).sum(),
            }
        })
        .collect();
    Ok(RollupResult {
        model_id: q.model_id.clone(),
        bucket: q.bucket,
        k,
        buckets,
    })
}

fn check_distribution(p: &[f64]) -> Result<(), AggregateError> {
    if let Some(i) = p.iter().position(|x| !x.is_finite() || *x < 0.0) {
        return Err(AggregateError::InvalidDistribution(format!(
            "entry {i} is negative or not finite"
        )));
    }
    Ok(())
}

/// Jensen-Shannon divergence in bits, clamped to `[0, 1]`.
pub fn compare(a: &[f64], b: &[f64]) -> Result<f64, AggregateError> {
    if a.len() != b.len() {
        return Err(AggregateError::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    check_distribution(a)?;
    check_distribution(b)?;
    let mut js = 0.0;
    for (&p, &q) in a.iter().zip(b) {
        let m = 0.5 * (p + q);
        let term = |x: f64| if x > 0.0 { x * (x / m).log2() } else { 0.0 };
        js += 0.5 * (term(p) + term(q));
    }
    Ok(js.clamp(0.0, 1.0))
}

/// One point of a divergence series: the i-th bucket of each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergencePoint {
    pub left_start: DateTime<Utc>,
    pub right_start: DateTime<Utc>,
    /// `None` when exactly one side of the pair is empty.
    pub divergence: Option<f64>,
}

/// Pairs the buckets of two rollups by position and compares each pair.
///
/// Both sides must use the same model, the same bucket size and the same
/// number of buckets; the ranges may differ (a period before an event
/// against the period after it). A pair that is empty on both sides has
/// divergence 0.
pub fn compare_rollups(
    left: &RollupResult,
    right: &RollupResult,
) -> Result<Vec<DivergencePoint>, AggregateError> {
    if left.bucket != right.bucket {
        return Err(AggregateError::Incomparable(format!(
            "bucket {} vs {}",
            left.bucket, right.bucket
        )));
    }
    if left.model_id != right.model_id {
        return Err(AggregateError::Incomparable(format!(
            "model {} vs {}",
            left.model_id, right.model_id
        )));
    }
    if left.buckets.len() != right.buckets.len() {
        return Err(AggregateError::Incomparable(format!(
            "{} buckets vs {}",
            left.buckets.len(),
            right.buckets.len()
        )));
    }
    left.buckets
        .iter()
        .zip(&right.buckets)
        .map(|(l, r)| {
            let divergence = match (l.document_count, r.document_count) {
                (0, 0) => Some(0.0),
                (0, _) | (_, 0) => None,
                _ => Some(compare(&l.topic_share, &r.topic_share)?),
            };
            Ok(DivergencePoint {
                left_start: l.start,
                right_start: r.start,
                divergence,
            })
        })
        .collect()
}

/// Per-bucket total share of a set of topics, clamped to `[0, 1]`.
pub fn topic_share_of(
    result: &RollupResult,
    ids: &BTreeSet<usize>,
) -> Result<Vec<f64>, AggregateError> {
    if let Some(&topic) = ids.iter().find(|&&t| t >= result.k) {
        return Err(AggregateError::TopicOutOfRange { topic, k: result.k });
    }
    Ok(result
        .buckets
        .iter()
        .map(|b| {
            ids.iter()
                .map(|&t| b.topic_share[t])
                .sum::<f64>()
                .clamp(0.0, 1.0)
        })
        .collect())
}

/// Operator-supplied names for sets of topics, per model.
///
/// ```toml
/// [model."lda-0123456789abcdef"]
/// climate = [3, 7]
/// economy = [1]
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicLabels {
    #[serde(default)]
    pub model: BTreeMap<String, BTreeMap<String, BTreeSet<usize>>>,
}

impl TopicLabels {
    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text =
            std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Label sets of one model; empty when none are configured.
    pub fn for_model(&self, model_id: &str) -> BTreeMap<String, BTreeSet<usize>> {
        self.model.get(model_id).cloned().unwrap_or_default()
    }
}
