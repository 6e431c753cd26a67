//! Seeded synthetic corpora with known ground truth.
//!
//! Used by the examples, the acceptance suite and the property tests: every
//! generator returns the generating parameters next to the sampled data so
//! recovered models can be checked against them.

use rand_distr::{Dirichlet, Distribution};

use crate::rng::{self, SeededRng};
use crate::textprep::Vocabulary;

/// Paragraphs drawn from `k` topics, each uniform over its own disjoint
/// block of `block_size` word ids. Topic `t` owns ids
/// `t * block_size .. (t + 1) * block_size`.
#[derive(Debug, Clone)]
pub struct BlockCorpus {
    pub k: usize,
    pub block_size: usize,
    /// K rows of V probabilities.
    pub topic_word: Vec<Vec<f64>>,
    pub mixtures: Vec<Vec<f64>>,
    pub paragraphs: Vec<Vec<u32>>,
}

impl BlockCorpus {
    pub fn vocab_size(&self) -> usize {
        self.k * self.block_size
    }
}

fn sample_index(rng: &mut SeededRng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng::uniform(rng) * total;
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn block_word(rng: &mut SeededRng, topic: usize, block_size: usize) -> u32 {
    (topic * block_size + rng::uniform_index(rng, block_size)) as u32
}

/// Mixtures are drawn from a symmetric Dirichlet with the given
/// concentration (small values give nearly single-topic paragraphs).
pub fn block_corpus(
    k: usize,
    block_size: usize,
    n_paragraphs: usize,
    tokens_per_paragraph: usize,
    concentration: f64,
    seed: u64,
) -> BlockCorpus {
    assert!(k >= 2, "Dirichlet mixtures need at least two topics");
    let mut rng = rng::seeded(seed);
    let v = k * block_size;
    let topic_word = (0..k)
        .map(|t| {
            (0..v)
                .map(|w| {
                    if w / block_size == t {
                        1.0 / block_size as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let dirichlet = Dirichlet::new(&vec![concentration; k]).expect("valid concentration");
    let mut mixtures = Vec::with_capacity(n_paragraphs);
    let mut paragraphs = Vec::with_capacity(n_paragraphs);
    for _ in 0..n_paragraphs {
        let mix: Vec<f64> = dirichlet.sample(&mut rng);
        let tokens = (0..tokens_per_paragraph)
            .map(|_| {
                let t = sample_index(&mut rng, &mix);
                block_word(&mut rng, t, block_size)
            })
            .collect();
        mixtures.push(mix);
        paragraphs.push(tokens);
    }
    BlockCorpus {
        k,
        block_size,
        topic_word,
        mixtures,
        paragraphs,
    }
}

/// Paragraphs each generated from a single topic of the block layout; the
/// generating topic is returned with every paragraph. Topics cycle so every
/// topic is represented.
pub fn pure_topic_paragraphs(
    k: usize,
    block_size: usize,
    n_paragraphs: usize,
    tokens_per_paragraph: usize,
    seed: u64,
) -> Vec<(usize, Vec<u32>)> {
    let mut rng = rng::seeded(seed);
    (0..n_paragraphs)
        .map(|i| {
            let topic = i % k;
            let tokens = (0..tokens_per_paragraph)
                .map(|_| block_word(&mut rng, topic, block_size))
                .collect();
            (topic, tokens)
        })
        .collect()
}

/// Two disjoint word blocks with mutually orthogonal embeddings: words of
/// cluster `c` live in embedding dimensions `c * dim/2 .. (c + 1) * dim/2`.
#[derive(Debug, Clone)]
pub struct TwoClusterCorpus {
    pub block_size: usize,
    pub dim: usize,
    pub vocabulary: Vocabulary,
    pub paragraphs: Vec<Vec<u32>>,
    /// Generating cluster of every paragraph.
    pub labels: Vec<usize>,
}

impl TwoClusterCorpus {
    pub fn embedding(&self, word: u32) -> Vec<f64> {
        let half = self.dim / 2;
        let cluster = word as usize / self.block_size;
        let mut v = vec![0.0; self.dim];
        v[cluster * half + (word as usize % self.block_size) % half] = 1.0;
        v
    }

    /// Mean embedding of a cluster's block.
    pub fn centroid(&self, cluster: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for w in cluster * self.block_size..(cluster + 1) * self.block_size {
            for (a, b) in c.iter_mut().zip(self.embedding(w as u32)) {
                *a += b / self.block_size as f64;
            }
        }
        c
    }

    /// The embedding table in the text format read by
    /// [`crate::hybrid::parse_embeddings`].
    pub fn embedding_file(&self) -> String {
        let v = self.vocabulary.len();
        let mut out = format!("{v} {}\n", self.dim);
        for (id, word) in self.vocabulary.words().iter().enumerate() {
            out.push_str(word);
            for x in self.embedding(id as u32) {
                out.push(' ');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
        out
    }
}

pub fn two_cluster_corpus(
    block_size: usize,
    n_paragraphs: usize,
    tokens_per_paragraph: usize,
    dim: usize,
    seed: u64,
) -> TwoClusterCorpus {
    assert!(dim >= 2 && dim % 2 == 0, "dim must be even and at least 2");
    let mut rng = rng::seeded(seed);
    let words = (0..2 * block_size).map(|i| format!("{}{:03}", ["aa", "bb"][i / block_size], i));
    let vocabulary = Vocabulary::from_word_list(words).expect("non-empty word list");
    let mut paragraphs = Vec::with_capacity(n_paragraphs);
    let mut labels = Vec::with_capacity(n_paragraphs);
    for i in 0..n_paragraphs {
        let cluster = i % 2;
        paragraphs.push(
            (0..tokens_per_paragraph)
                .map(|_| block_word(&mut rng, cluster, block_size))
                .collect(),
        );
        labels.push(cluster);
    }
    TwoClusterCorpus {
        block_size,
        dim,
        vocabulary,
        paragraphs,
        labels,
    }
}
