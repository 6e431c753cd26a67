use super::{LdaConfig, LdaError, LdaModel, VocabRef};
use crate::rng::{self, SeededRng};
use crate::TopicDistribution;

/// Result of [`train`]: the frozen model plus the averaged distribution of
/// every training paragraph, in input order.
#[derive(Debug, Clone)]
pub struct LdaFit {
    pub model: LdaModel,
    pub thetas: Vec<TopicDistribution>,
    /// Training-set perplexity after each sweep; empty unless traced.
    pub perplexity_trace: Vec<f64>,
}

pub fn train<P: AsRef<[u32]>>(
    paragraphs: &[P],
    vocab: VocabRef,
    config: &LdaConfig,
) -> Result<LdaFit, LdaError> {
    run(paragraphs, vocab, config, false)
}

/// Like [`train`] but also records the training perplexity after every sweep,
/// using the point estimates of that sweep.
pub fn train_traced<P: AsRef<[u32]>>(
    paragraphs: &[P],
    vocab: VocabRef,
    config: &LdaConfig,
) -> Result<LdaFit, LdaError> {
    run(paragraphs, vocab, config, true)
}

struct Sampler<'a> {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<&'a [u32]>,
    z: Vec<Vec<u32>>,
    n_dk: Vec<u32>,
    n_wk: Vec<u32>,
    n_k: Vec<u64>,
    weights: Vec<f64>,
}

impl<'a> Sampler<'a> {
    fn new(docs: Vec<&'a [u32]>, k: usize, v: usize, config: &LdaConfig, rng: &mut SeededRng) -> Self {
        let mut s = Self {
            k,
            v,
            alpha: config.alpha,
            beta: config.beta,
            z: Vec::with_capacity(docs.len()),
            n_dk: vec![0; docs.len() * k],
            n_wk: vec![0; v * k],
            n_k: vec![0; k],
            weights: vec![0.0; k],
            docs,
        };
        for d in 0..s.docs.len() {
            let doc = s.docs[d];
            let mut zd = Vec::with_capacity(doc.len());
            for &w in doc {
                let t = rng::uniform_index(rng, k);
                zd.push(t as u32);
                s.n_dk[d * k + t] += 1;
                s.n_wk[w as usize * k + t] += 1;
                s.n_k[t] += 1;
            }
            s.z.push(zd);
        }
        s
    }

    fn sweep(&mut self, rng: &mut SeededRng) {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        for d in 0..self.docs.len() {
            let doc = self.docs[d];
            let dk = &mut self.n_dk[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let wk = &mut self.n_wk[w as usize * k..(w as usize + 1) * k];
                let old = self.z[d][i] as usize;
                dk[old] -= 1;
                wk[old] -= 1;
                self.n_k[old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    total += (dk[t] as f64 + self.alpha) * (wk[t] as f64 + self.beta)
                        / (self.n_k[t] as f64 + vbeta);
                    self.weights[t] = total;
                }
                let u = rng::uniform(rng) * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k - 1);

                dk[new] += 1;
                wk[new] += 1;
                self.n_k[new] += 1;
                self.z[d][i] = new as u32;
            }
        }
        debug_assert!(self.counts_conserved());
    }

    fn counts_conserved(&self) -> bool {
        let k = self.k;
        let docs_ok = self
            .docs
            .iter()
            .enumerate()
            .all(|(d, doc)| self.n_dk[d * k..(d + 1) * k].iter().map(|&c| c as usize).sum::<usize>() == doc.len());
        let total: usize = self.docs.iter().map(|d| d.len()).sum();
        let words: u64 = self.n_wk.iter().map(|&c| c as u64).sum();
        docs_ok && words == total as u64 && self.n_k.iter().sum::<u64>() == total as u64
    }

    fn theta_point(&self, d: usize, out: &mut [f64]) {
        let k = self.k;
        let n_d = self.docs[d].len() as f64;
        let denom = n_d + k as f64 * self.alpha;
        for t in 0..k {
            out[t] = (self.n_dk[d * k + t] as f64 + self.alpha) / denom;
        }
    }

    fn perplexity(&self) -> f64 {
        let k = self.k;
        let vbeta = self.v as f64 * self.beta;
        let mut theta = vec![0.0; k];
        let mut log_lik = 0.0;
        let mut n = 0usize;
        for d in 0..self.docs.len() {
            self.theta_point(d, &mut theta);
            for &w in self.docs[d] {
                let wk = &self.n_wk[w as usize * k..(w as usize + 1) * k];
                let p: f64 = (0..k)
                    .map(|t| theta[t] * (wk[t] as f64 + self.beta) / (self.n_k[t] as f64 + vbeta))
                    .sum();
                log_lik += p.ln();
                n += 1;
            }
        }
        (-log_lik / n as f64).exp()
    }
}

fn run<P: AsRef<[u32]>>(
    paragraphs: &[P],
    vocab: VocabRef,
    config: &LdaConfig,
    trace: bool,
) -> Result<LdaFit, LdaError> {
    config.validate()?;
    let v = vocab.size;
    if v == 0 {
        return Err(LdaError::InvalidConfig("vocabulary is empty".into()));
    }
    let docs: Vec<&[u32]> = paragraphs.iter().map(AsRef::as_ref).collect();
    if docs.iter().all(|d| d.is_empty()) {
        return Err(LdaError::EmptyCorpus);
    }
    if let Some(&w) = docs.iter().flat_map(|d| d.iter()).find(|&&w| w as usize >= v) {
        return Err(LdaError::InvalidConfig(format!(
            "token id {w} outside vocabulary of size {v}"
        )));
    }

    let k = config.k;
    let mut rng = rng::seeded(config.seed);
    let mut sampler = Sampler::new(docs, k, v, config, &mut rng);

    let mut acc = vec![0.0; sampler.docs.len() * k];
    let mut retained = 0usize;
    let mut point = vec![0.0; k];
    let mut perplexity_trace = Vec::new();
    for sweep in 1..=config.iterations {
        sampler.sweep(&mut rng);
        if trace {
            perplexity_trace.push(sampler.perplexity());
        }
        if sweep > config.burn_in {
            retained += 1;
            for d in 0..sampler.docs.len() {
                sampler.theta_point(d, &mut point);
                for (a, p) in acc[d * k..(d + 1) * k].iter_mut().zip(&point) {
                    *a += p;
                }
            }
        }
    }

    let thetas = acc
        .chunks(k)
        .map(|row| {
            let avg = row.iter().map(|s| s / retained as f64).collect();
            TopicDistribution::from_weights(avg).expect("averaged distribution is valid")
        })
        .collect();

    let mut n_kw = vec![0u64; k * v];
    for w in 0..v {
        for t in 0..k {
            n_kw[t * v + w] = sampler.n_wk[w * k + t] as u64;
        }
    }
    let model = LdaModel::from_counts(config.clone(), vocab, n_kw)?;
    Ok(LdaFit {
        model,
        thetas,
        perplexity_trace,
    })
}

/// Folds a new paragraph into a frozen model.
///
/// Only the paragraph's own assignments are resampled; `phi` stays fixed.
/// The returned distribution averages the point estimates of the second half
/// of the sweeps. Token ids outside the model's vocabulary are ignored.
pub fn infer(
    model: &LdaModel,
    tokens: &[u32],
    iterations: usize,
    seed: u64,
) -> Result<TopicDistribution, LdaError> {
    if iterations < 1 {
        return Err(LdaError::InvalidConfig("iterations must be at least 1".into()));
    }
    let v = model.vocab_size();
    let tokens: Vec<u32> = tokens.iter().copied().filter(|&w| (w as usize) < v).collect();
    if tokens.is_empty() {
        return Err(LdaError::EmptyParagraph);
    }
    let k = model.k();
    let alpha = model.config().alpha;
    let mut rng = rng::seeded(seed);

    let mut z: Vec<usize> = Vec::with_capacity(tokens.len());
    let mut n_dk = vec![0u32; k];
    for _ in &tokens {
        let t = rng::uniform_index(&mut rng, k);
        z.push(t);
        n_dk[t] += 1;
    }

    let first_kept = iterations / 2;
    let denom = tokens.len() as f64 + k as f64 * alpha;
    let mut weights = vec![0.0; k];
    let mut acc = vec![0.0; k];
    for sweep in 0..iterations {
        for (i, &w) in tokens.iter().enumerate() {
            n_dk[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (n_dk[t] as f64 + alpha) * model.phi(t, w);
                weights[t] = total;
            }
            let u = rng::uniform(&mut rng) * total;
            let new = weights.iter().position(|&c| u < c).unwrap_or(k - 1);
            n_dk[new] += 1;
            z[i] = new;
        }
        if sweep >= first_kept {
            for t in 0..k {
                acc[t] += (n_dk[t] as f64 + alpha) / denom;
            }
        }
    }
    let kept = (iterations - first_kept) as f64;
    Ok(TopicDistribution::from_weights(acc.into_iter().map(|a| a / kept).collect())
        .expect("averaged distribution is valid"))
}
