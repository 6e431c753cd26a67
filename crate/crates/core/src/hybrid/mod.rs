//! Embedding-augmented topic model.
//!
//! Topics are vectors in the space of a static word-embedding table. Every
//! paragraph owns a row of logits whose softmax is its topic mixture, and the
//! mixture-weighted sum of topic vectors is added to the pivot word's vector
//! to predict nearby words with skip-gram negative sampling. A Dirichlet
//! log-prior with `alpha_prior < 1` pulls the mixtures toward sparsity, so
//! they stay readable the way LDA mixtures are. See [`objective`] for the
//! exact loss.
//!
//! Word input vectors come from the embedding table and stay frozen; topic
//! vectors, paragraph logits and word output vectors are trained.

mod embeddings;
mod format;
pub mod objective;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textprep::Vocabulary;
use crate::TopicDistribution;

pub use embeddings::{load_embeddings, parse_embeddings, EmbeddingTable};
pub use format::MODEL_FORMAT;
pub use objective::{hybrid_loss, hybrid_loss_and_gradient, HybridGradient, PairSample};
pub use train::{infer_hybrid, train_hybrid, NEGATIVE_SAMPLING_POWER};

#[derive(Debug, Error)]
pub enum HybridError {
    #[error("embedding file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("embedding file line {line}: expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("insufficient embedding coverage: {0}")]
    InsufficientCoverage(String),
    #[error("training diverged at epoch {epoch}, paragraph {paragraph}: {detail}")]
    DivergenceDetected {
        epoch: usize,
        paragraph: usize,
        detail: String,
    },
    #[error("{what} index {index} out of range")]
    IndexOutOfRange { what: &'static str, index: usize },
    #[error("topic {topic} out of range for a {k}-topic model")]
    TopicOutOfRange { topic: usize, k: usize },
    #[error("invalid hybrid configuration: {0}")]
    InvalidConfig(String),
    #[error("paragraph has fewer than two tokens with embeddings")]
    EmptyParagraph,
    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub negative_samples: usize,
    pub window: usize,
    /// Strength of the Dirichlet log-prior on the mixtures.
    pub lambda: f64,
    pub alpha_prior: f64,
    pub seed: u64,
}

impl HybridTrainConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            learning_rate: 0.025,
            epochs: 10,
            negative_samples: 5,
            window: 5,
            lambda: 1.0,
            alpha_prior: 0.7,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), HybridError> {
        let fail = |m: &str| Err(HybridError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if self.negative_samples < 1 {
            return fail("negative_samples must be at least 1");
        }
        if self.window < 1 {
            return fail("window must be at least 1");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be non-negative");
        }
        if !(self.alpha_prior > 0.0 && self.alpha_prior < 1.0) {
            return fail("alpha_prior must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Trained parameters. Matrices are row-major; embedding rows follow the
/// [`EmbeddingTable`] the model was trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridModel {
    pub k: usize,
    pub dim: usize,
    pub config: HybridTrainConfig,
    pub vocab_version: String,
    /// Row of each vocabulary id, if the word has an embedding.
    pub row_of: Vec<Option<u32>>,
    /// Vocabulary id of each row.
    pub vocab_ids: Vec<u32>,
    /// Training-corpus frequency of each row; drives negative sampling.
    pub unigram_counts: Vec<u64>,
    /// rows x dim, frozen.
    pub input_vectors: Vec<f64>,
    /// rows x dim.
    pub output_vectors: Vec<f64>,
    /// K x dim.
    pub topic_vectors: Vec<f64>,
    /// paragraphs x K.
    pub doc_logits: Vec<f64>,
}

impl HybridModel {
    pub fn rows(&self) -> usize {
        self.vocab_ids.len()
    }

    pub fn paragraphs(&self) -> usize {
        self.doc_logits.len() / self.k
    }

    pub fn row_of(&self, vocab_id: u32) -> Option<u32> {
        self.row_of.get(vocab_id as usize).copied().flatten()
    }

    pub fn input_vector(&self, row: u32) -> &[f64] {
        let r = row as usize;
        &self.input_vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub fn output_vector(&self, row: u32) -> &[f64] {
        let r = row as usize;
        &self.output_vectors[r * self.dim..(r + 1) * self.dim]
    }

    pub fn topic_vector(&self, topic: usize) -> &[f64] {
        &self.topic_vectors[topic * self.dim..(topic + 1) * self.dim]
    }

    pub fn doc_logits_row(&self, paragraph: usize) -> Result<&[f64], HybridError> {
        if paragraph >= self.paragraphs() {
            return Err(HybridError::IndexOutOfRange {
                what: "paragraph",
                index: paragraph,
            });
        }
        Ok(&self.doc_logits[paragraph * self.k..(paragraph + 1) * self.k])
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.input_vectors,
            &self.output_vectors,
            &self.topic_vectors,
            &self.doc_logits,
        ]
        .iter()
        .all(|m| m.iter().all(|x| x.is_finite()))
    }

    /// Content hash of the serialized model, prefixed with `hyb-`.
    pub fn model_id(&self) -> String {
        format::content_id(self)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        format::to_bytes(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, HybridError> {
        format::from_bytes(bytes)
    }
}

/// Mixture of a training paragraph: the softmax of its logits row.
pub fn doc_topics_hybrid(
    model: &HybridModel,
    paragraph: usize,
) -> Result<TopicDistribution, HybridError> {
    let row = model.doc_logits_row(paragraph)?;
    Ok(TopicDistribution::from_weights(objective::softmax(row)).expect("softmax is a distribution"))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `n` words whose embedding is closest (cosine) to a topic vector,
/// descending, ties broken by word.
pub fn topic_words_hybrid(
    model: &HybridModel,
    vocab: &Vocabulary,
    topic: usize,
    n: usize,
) -> Result<Vec<(String, f64)>, HybridError> {
    if topic >= model.k {
        return Err(HybridError::TopicOutOfRange { topic, k: model.k });
    }
    let t = model.topic_vector(topic);
    let mut ranked: Vec<(&str, f64)> = (0..model.rows() as u32)
        .map(|row| {
            let word = vocab.word_of(model.vocab_ids[row as usize]).unwrap_or("");
            (word, cosine(t, model.input_vector(row)))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(ranked
        .into_iter()
        .take(n)
        .map(|(w, c)| (w.to_string(), c))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_model(k: usize, dim: usize, words: usize) -> HybridModel {
        HybridModel {
            k,
            dim,
            config: HybridTrainConfig::new(1),
            vocab_version: "v".into(),
            row_of: (0..words as u32).map(Some).collect(),
            vocab_ids: (0..words as u32).collect(),
            unigram_counts: vec![1; words],
            input_vectors: vec![0.0; words * dim],
            output_vectors: vec![0.0; words * dim],
            topic_vectors: vec![0.0; k * dim],
            doc_logits: vec![0.0; k],
        }
    }

    #[test]
    fn zero_logits_are_uniform() {
        let m = tiny_model(4, 2, 1);
        let t = doc_topics_hybrid(&m, 0).unwrap();
        assert_eq!(t.as_slice(), &[0.25; 4]);
    }

    #[test]
    fn softmax_arithmetic() {
        let mut m = tiny_model(2, 2, 1);
        m.doc_logits = vec![3f64.ln(), 0.0];
        let t = doc_topics_hybrid(&m, 0).unwrap();
        assert!((t.as_slice()[0] - 0.75).abs() < 1e-15);
        assert!((t.as_slice()[1] - 0.25).abs() < 1e-15);
        assert!(matches!(
            doc_topics_hybrid(&m, 1),
            Err(HybridError::IndexOutOfRange { what: "paragraph", index: 1 })
        ));
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut m = tiny_model(3, 2, 1);
        m.doc_logits = vec![0.3, -1.2, 2.0];
        let a = doc_topics_hybrid(&m, 0).unwrap();
        m.doc_logits = vec![100.3, 98.8, 102.0];
        let b = doc_topics_hybrid(&m, 0).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn topic_words_by_cosine() {
        let vocab = Vocabulary::from_word_list(["east", "north", "west"]).unwrap();
        let mut m = tiny_model(1, 2, 3);
        m.input_vectors = vec![1.0, 0.0, 0.0, 1.0, -1.0, 0.0];
        m.topic_vectors = vec![2.0, 0.0];
        let words = topic_words_hybrid(&m, &vocab, 0, 3).unwrap();
        assert_eq!(words[0], ("east".to_string(), 1.0));
        assert_eq!(words[1], ("north".to_string(), 0.0));
        assert_eq!(words[2], ("west".to_string(), -1.0));
        assert!(matches!(
            topic_words_hybrid(&m, &vocab, 1, 3),
            Err(HybridError::TopicOutOfRange { topic: 1, k: 1 })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(HybridTrainConfig::new(0).validate().is_ok());
        let mut c = HybridTrainConfig::new(0);
        c.alpha_prior = 1.0;
        assert!(c.validate().is_err());
        c = HybridTrainConfig::new(0);
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
        c = HybridTrainConfig::new(0);
        c.negative_samples = 0;
        assert!(c.validate().is_err());
    }
}
