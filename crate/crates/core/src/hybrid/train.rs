use rand_distr::{Distribution, Normal};

use super::objective::{softmax, Rows};
use super::{EmbeddingTable, HybridError, HybridGradient, HybridModel, HybridTrainConfig};
use crate::rng::{self, SeededRng};
use crate::TopicDistribution;

/// Negatives are drawn from the unigram distribution raised to this power.
pub const NEGATIVE_SAMPLING_POWER: f64 = 0.75;

const INIT_STD: f64 = 0.1;

struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[u64]) -> Self {
        let mut total = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                total += (c as f64).powf(NEGATIVE_SAMPLING_POWER);
                total
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut SeededRng) -> u32 {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng::uniform(rng) * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1) as u32
    }

    /// `n` negatives, skipping draws that hit the context word.
    fn negatives(&self, rng: &mut SeededRng, n: usize, context: u32) -> Vec<u32> {
        (0..n)
            .map(|_| self.draw(rng))
            .filter(|&r| r != context)
            .collect()
    }
}

fn gaussian(rng: &mut SeededRng, n: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    (0..n).map(|_| normal.sample(rng)).collect()
}

fn finite(loss: f64, grad: &HybridGradient) -> bool {
    loss.is_finite()
        && grad.doc_logits.iter().all(|x| x.is_finite())
        && grad.topic_vectors.iter().all(|x| x.is_finite())
        && grad.output_vectors.values().flatten().all(|x| x.is_finite())
}

/// Window pairs `(pivot position, context position)` of one paragraph.
fn window_pairs(len: usize, window: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len).flat_map(move |i| {
        let lo = i.saturating_sub(window);
        let hi = (i + window + 1).min(len);
        (lo..hi).filter(move |&j| j != i).map(move |j| (i, j))
    })
}

/// Trains topic vectors, paragraph logits and output vectors by SGD over
/// skip-gram pairs. Paragraphs are vocabulary-id sequences; tokens without
/// an embedding are skipped. Iteration order is fixed (epochs, paragraphs,
/// pivots, contexts) so a seed reproduces the model bit for bit.
pub fn train_hybrid<P: AsRef<[u32]>>(
    paragraphs: &[P],
    embeddings: &EmbeddingTable,
    k: usize,
    config: &HybridTrainConfig,
) -> Result<HybridModel, HybridError> {
    config.validate()?;
    if k < 1 {
        return Err(HybridError::InvalidConfig("k must be at least 1".into()));
    }
    if embeddings.rows() == 0 {
        return Err(HybridError::InsufficientCoverage(
            "no vocabulary word has an embedding".into(),
        ));
    }
    let row_paragraphs: Vec<Vec<u32>> = paragraphs
        .iter()
        .map(|p| p.as_ref().iter().filter_map(|&w| embeddings.row_of(w)).collect())
        .collect();
    if !row_paragraphs.iter().any(|p| p.len() >= 2) {
        return Err(HybridError::InsufficientCoverage(
            "no paragraph has two or more tokens with embeddings".into(),
        ));
    }

    let mut unigram_counts = vec![0u64; embeddings.rows()];
    for &r in row_paragraphs.iter().flatten() {
        unigram_counts[r as usize] += 1;
    }
    let sampler = NegativeSampler::new(&unigram_counts);

    let dim = embeddings.dim();
    let mut rng = rng::seeded(config.seed);
    let topic_vectors = gaussian(&mut rng, k * dim);
    let doc_logits = gaussian(&mut rng, row_paragraphs.len() * k);
    let vocab_version = embeddings.vocab_version().to_string();
    let (dim, input_vectors, vocab_ids, row_of) = embeddings.clone().into_parts();
    let mut model = HybridModel {
        k,
        dim,
        config: config.clone(),
        vocab_version,
        row_of,
        output_vectors: vec![0.0; input_vectors.len()],
        vocab_ids,
        unigram_counts,
        input_vectors,
        topic_vectors,
        doc_logits,
    };

    let lr = config.learning_rate;
    for epoch in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut n_pairs = 0usize;
        for (d, tokens) in row_paragraphs.iter().enumerate() {
            for (i, j) in window_pairs(tokens.len(), config.window) {
                let rows = Rows {
                    pivot: tokens[i],
                    context: tokens[j],
                    negatives: sampler.negatives(&mut rng, config.negative_samples, tokens[j]),
                };
                let logits = &model.doc_logits[d * k..(d + 1) * k];
                let (loss, grad) = model.evaluate(logits, &rows, true);
                let grad = grad.expect("gradient requested");
                if !finite(loss, &grad) {
                    return Err(HybridError::DivergenceDetected {
                        epoch,
                        paragraph: d,
                        detail: format!("loss {loss}"),
                    });
                }
                epoch_loss += loss;
                n_pairs += 1;

                for (l, g) in model.doc_logits[d * k..(d + 1) * k].iter_mut().zip(&grad.doc_logits) {
                    *l -= lr * g;
                }
                for (t, g) in model.topic_vectors.iter_mut().zip(&grad.topic_vectors) {
                    *t -= lr * g;
                }
                for (row, g) in &grad.output_vectors {
                    let r = *row as usize;
                    for (o, gi) in model.output_vectors[r * dim..(r + 1) * dim].iter_mut().zip(g) {
                        *o -= lr * gi;
                    }
                }
            }
        }
        tracing::debug!(epoch, mean_loss = epoch_loss / n_pairs.max(1) as f64, "hybrid epoch");
    }
    if !model.is_finite() {
        return Err(HybridError::DivergenceDetected {
            epoch: config.epochs,
            paragraph: 0,
            detail: "non-finite parameters after training".into(),
        });
    }
    Ok(model)
}

/// Folds a new paragraph into a trained model: fits a fresh logits row with
/// every other parameter frozen and returns its softmax.
pub fn infer_hybrid(
    model: &HybridModel,
    tokens: &[u32],
    epochs: usize,
    seed: u64,
) -> Result<TopicDistribution, HybridError> {
    let rows: Vec<u32> = tokens.iter().filter_map(|&w| model.row_of(w)).collect();
    if rows.len() < 2 {
        return Err(HybridError::EmptyParagraph);
    }
    let k = model.k;
    let sampler = NegativeSampler::new(&model.unigram_counts);
    let mut rng = rng::seeded(seed);
    let mut logits = gaussian(&mut rng, k);
    let lr = model.config.learning_rate;
    for _ in 0..epochs {
        for (i, j) in window_pairs(rows.len(), model.config.window) {
            let pair = Rows {
                pivot: rows[i],
                context: rows[j],
                negatives: sampler.negatives(&mut rng, model.config.negative_samples, rows[j]),
            };
            let (_, grad) = model.evaluate(&logits, &pair, true);
            let grad = grad.expect("gradient requested");
            for (l, g) in logits.iter_mut().zip(&grad.doc_logits) {
                *l -= lr * g;
            }
        }
    }
    TopicDistribution::from_weights(softmax(&logits)).map_err(|e| HybridError::DivergenceDetected {
        epoch: epochs,
        paragraph: 0,
        detail: e.to_string(),
    })
}
