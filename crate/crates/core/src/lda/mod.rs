//! Latent Dirichlet allocation over paragraphs.
//!
//! Training is collapsed Gibbs sampling: `theta` and `phi` are integrated out
//! and each token's topic is resampled from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V * beta)
//! ```
//!
//! with the token's own assignment removed from every count. Paragraph
//! distributions are averaged over the post-burn-in sweeps. New paragraphs
//! are folded in against frozen topic-word counts, which is how the pipeline
//! runs its daily online inference.
//!
//! All randomness comes from [`crate::rng`]; a `(corpus, config)` pair always
//! yields a bitwise identical model.

mod format;
mod gibbs;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::Vocabulary;
use crate::TopicDistribution;

pub use format::MODEL_FORMAT;
pub use gibbs::{infer, train, train_traced, LdaFit};

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("corpus has no tokens")]
    EmptyCorpus,
    #[error("invalid LDA configuration: {0}")]
    InvalidConfig(String),
    #[error("paragraph has no in-vocabulary tokens")]
    EmptyParagraph,
    #[error("topic {topic} out of range for a {k}-topic model")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_BETA: f64 = 0.01;
pub const DEFAULT_ITERATIONS: usize = 1000;
pub const DEFAULT_BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl LdaConfig {
    /// Defaults: `alpha = 50 / K`, `beta = 0.01`, 1000 sweeps, 200 burn-in.
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            alpha: 50.0 / k.max(1) as f64,
            beta: DEFAULT_BETA,
            iterations: DEFAULT_ITERATIONS,
            burn_in: DEFAULT_BURN_IN,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), LdaError> {
        let fail = |m: &str| Err(LdaError::InvalidConfig(m.to_string()));
        if self.k < 1 {
            return fail("k must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return fail("alpha must be positive");
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive");
        }
        if self.iterations <= self.burn_in {
            return fail("iterations must exceed burn_in");
        }
        Ok(())
    }
}

/// Identifies the vocabulary a model was trained against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabRef {
    pub size: usize,
    pub version: String,
}

impl From<&Vocabulary> for VocabRef {
    fn from(v: &Vocabulary) -> Self {
        Self {
            size: v.len(),
            version: v.version(),
        }
    }
}

/// A trained model: topic-word counts plus the smoothed `phi` derived from
/// them. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    config: LdaConfig,
    vocab_version: String,
    vocab_size: usize,
    /// K x V, row-major.
    n_kw: Vec<u64>,
    n_k: Vec<u64>,
    /// K x V, row-major; `(n_kw + beta) / (n_k + V * beta)`.
    phi: Vec<f64>,
    model_id: String,
}

impl LdaModel {
    /// Builds a model from raw topic-word counts (K rows of V counts).
    pub fn from_counts(
        config: LdaConfig,
        vocab: VocabRef,
        n_kw: Vec<u64>,
    ) -> Result<Self, LdaError> {
        config.validate()?;
        if vocab.size == 0 {
            return Err(LdaError::InvalidConfig("vocabulary is empty".into()));
        }
        if n_kw.len() != config.k * vocab.size {
            return Err(LdaError::InvalidConfig(format!(
                "expected {} counts, got {}",
                config.k * vocab.size,
                n_kw.len()
            )));
        }
        let v = vocab.size;
        let n_k: Vec<u64> = n_kw.chunks(v).map(|row| row.iter().sum()).collect();
        let vbeta = v as f64 * config.beta;
        let phi = n_kw
            .chunks(v)
            .zip(&n_k)
            .flat_map(|(row, &total)| {
                let denom = total as f64 + vbeta;
                row.iter().map(move |&c| (c as f64 + config.beta) / denom)
            })
            .collect();
        let mut model = Self {
            config,
            vocab_version: vocab.version,
            vocab_size: v,
            n_kw,
            n_k,
            phi,
            model_id: String::new(),
        };
        model.model_id = format::content_id(&model);
        Ok(model)
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn vocab_version(&self) -> &str {
        &self.vocab_version
    }

    /// Content hash of the serialized model, prefixed with `lda-`.
    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn n_kw(&self) -> &[u64] {
        &self.n_kw
    }

    pub fn n_k(&self) -> &[u64] {
        &self.n_k
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        &self.phi[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    #[inline]
    pub fn phi(&self, topic: usize, word: u32) -> f64 {
        self.phi[topic * self.vocab_size + word as usize]
    }

    /// Relabels topics: topic `k` of the result is topic `perm[k]` of `self`.
    pub fn permute_topics(&self, perm: &[usize]) -> Result<Self, LdaError> {
        let k = self.k();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..k).collect::<Vec<_>>() {
            return Err(LdaError::InvalidConfig("not a permutation of 0..K".into()));
        }
        let v = self.vocab_size;
        let n_kw = perm
            .iter()
            .flat_map(|&src| self.n_kw[src * v..(src + 1) * v].iter().copied())
            .collect();
        Self::from_counts(
            self.config.clone(),
            VocabRef {
                size: v,
                version: self.vocab_version.clone(),
            },
            n_kw,
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::to_bytes(self)
    }

    /// Parses a serialized model and re-checks every invariant.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LdaError> {
        format::from_bytes(bytes)
    }
}

/// The `n` most probable words of a topic, descending, ties broken by word.
pub fn top_words(
    model: &LdaModel,
    vocab: &Vocabulary,
    topic: usize,
    n: usize,
) -> Result<Vec<(String, f64)>, LdaError> {
    if topic >= model.k() {
        return Err(LdaError::TopicOutOfRange {
            topic,
            k: model.k(),
        });
    }
    let mut ranked: Vec<(&str, f64)> = model
        .phi_row(topic)
        .iter()
        .enumerate()
        .map(|(w, &p)| (vocab.word_of(w as u32).unwrap_or(""), p))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(w, p)| (w.to_string(), p))
        .collect())
}

/// `exp(-(1/N) * sum over tokens of log sum_k theta_dk * phi_kw)`.
pub fn perplexity<'a, I>(model: &LdaModel, paragraphs: I) -> Result<f64, LdaError>
where
    I: IntoIterator<Item = (&'a [u32], &'a TopicDistribution)>,
{
    let mut log_lik = 0.0;
    let mut n_tokens = 0usize;
    for (tokens, theta) in paragraphs {
        let theta = theta.as_slice();
        for &w in tokens {
            let p: f64 = (0..model.k()).map(|k| theta[k] * model.phi(k, w)).sum();
            log_lik += p.ln();
            n_tokens += 1;
        }
    }
    if n_tokens == 0 {
        return Err(LdaError::EmptyCorpus);
    }
    Ok((-log_lik / n_tokens as f64).exp())
}
