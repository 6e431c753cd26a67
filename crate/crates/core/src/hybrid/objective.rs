//! Per-pair objective and its analytic gradient.
//!
//! For a paragraph `d` with mixture `p = softmax(l_d)`, a pivot word with
//! frozen input vector `w`, a context word and a set of negative words:
//!
//! ```text
//! c     = w + sum_k p_k * t_k
//! L_neg = -log sigmoid(c . o_ctx) - sum_n log sigmoid(-c . o_n)
//! L_dir = -(alpha_prior - 1) * sum_k log p_k
//! L     = L_neg + lambda * L_dir
//! ```
//!
//! Gradients are taken with respect to the topic vectors `t`, the paragraph
//! logits `l_d` and the output vectors `o` of the context and negatives.

use std::collections::BTreeMap;

use super::{HybridError, HybridModel};

/// `-log sigmoid(x)`, evaluated without overflow.
#[inline]
pub(super) fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[inline]
pub(super) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(super) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub(super) fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One skip-gram training example: paragraph index plus vocabulary ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSample {
    pub paragraph: usize,
    pub pivot: u32,
    pub context: u32,
    pub negatives: Vec<u32>,
}

/// Gradient of the per-pair loss. Output-vector rows are keyed by embedding
/// row; repeated rows are accumulated.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridGradient {
    pub doc_logits: Vec<f64>,
    pub topic_vectors: Vec<f64>,
    pub output_vectors: BTreeMap<u32, Vec<f64>>,
}

pub(super) struct Rows {
    pub pivot: u32,
    pub context: u32,
    pub negatives: Vec<u32>,
}

impl HybridModel {
    pub(super) fn rows_for(&self, pair: &PairSample) -> Result<Rows, HybridError> {
        let row = |id: u32| {
            self.row_of(id)
                .ok_or(HybridError::IndexOutOfRange { what: "word", index: id as usize })
        };
        Ok(Rows {
            pivot: row(pair.pivot)?,
            context: row(pair.context)?,
            negatives: pair.negatives.iter().map(|&n| row(n)).collect::<Result<_, _>>()?,
        })
    }

    /// Loss (and optionally gradient) for a pair against an explicit logits
    /// row, which lets folding-in reuse the objective with a fresh row.
    pub(super) fn evaluate(
        &self,
        logits: &[f64],
        rows: &Rows,
        with_gradient: bool,
    ) -> (f64, Option<HybridGradient>) {
        let k = self.k;
        let dim = self.dim;
        let p = softmax(logits);
        let log_p = log_softmax(logits);

        let mut c = self.input_vector(rows.pivot).to_vec();
        for t in 0..k {
            for (ci, ti) in c.iter_mut().zip(self.topic_vector(t)) {
                *ci += p[t] * ti;
            }
        }

        let pos = dot(&c, self.output_vector(rows.context));
        let mut loss = neg_log_sigmoid(pos);
        let neg_scores: Vec<f64> = rows
            .negatives
            .iter()
            .map(|&n| dot(&c, self.output_vector(n)))
            .collect();
        for &s in &neg_scores {
            loss += neg_log_sigmoid(-s);
        }
        let dir_coef = -(self.config.alpha_prior - 1.0);
        let l_dir: f64 = dir_coef * log_p.iter().sum::<f64>();
        loss += self.config.lambda * l_dir;

        if !with_gradient {
            return (loss, None);
        }

        // dL/dc
        let mut g_c = vec![0.0; dim];
        let pos_coef = -sigmoid(-pos);
        for (g, o) in g_c.iter_mut().zip(self.output_vector(rows.context)) {
            *g += pos_coef * o;
        }
        let mut output_vectors: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        let acc = |map: &mut BTreeMap<u32, Vec<f64>>, row: u32, coef: f64| {
            let e = map.entry(row).or_insert_with(|| vec![0.0; dim]);
            for (g, ci) in e.iter_mut().zip(&c) {
                *g += coef * ci;
            }
        };
        acc(&mut output_vectors, rows.context, pos_coef);
        for (&n, &s) in rows.negatives.iter().zip(&neg_scores) {
            let coef = sigmoid(s);
            for (g, o) in g_c.iter_mut().zip(self.output_vector(n)) {
                *g += coef * o;
            }
            acc(&mut output_vectors, n, coef);
        }

        let mut topic_vectors = vec![0.0; k * dim];
        let mut a = vec![0.0; k];
        for t in 0..k {
            for (g, gc) in topic_vectors[t * dim..(t + 1) * dim].iter_mut().zip(&g_c) {
                *g = p[t] * gc;
            }
            a[t] = dot(&g_c, self.topic_vector(t));
        }
        let a_bar: f64 = p.iter().zip(&a).map(|(pi, ai)| pi * ai).sum();
        let doc_logits = (0..k)
            .map(|j| {
                p[j] * (a[j] - a_bar)
                    + self.config.lambda * dir_coef * (1.0 - k as f64 * p[j])
            })
            .collect();

        (
            loss,
            Some(HybridGradient {
                doc_logits,
                topic_vectors,
                output_vectors,
            }),
        )
    }
}

/// Per-pair loss `L_neg + lambda * L_dir`.
pub fn hybrid_loss(model: &HybridModel, pair: &PairSample) -> Result<f64, HybridError> {
    let rows = model.rows_for(pair)?;
    let logits = model.doc_logits_row(pair.paragraph)?;
    Ok(model.evaluate(logits, &rows, false).0)
}

/// Per-pair loss together with its analytic gradient.
pub fn hybrid_loss_and_gradient(
    model: &HybridModel,
    pair: &PairSample,
) -> Result<(f64, HybridGradient), HybridError> {
    let rows = model.rows_for(pair)?;
    let logits = model.doc_logits_row(pair.paragraph)?;
    let (loss, grad) = model.evaluate(logits, &rows, true);
    Ok((loss, grad.expect("gradient requested")))
}
