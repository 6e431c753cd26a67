//! Flat-text hybrid model artifact, laid out like the LDA artifact with its
//! own format tag:
//!
//! ```text
//! mustas-hybrid 1
//! model_id hyb-<16 hex>
//! k <K>
//! dim <D>
//! learning_rate / epochs / negative_samples / window / lambda / alpha_prior / seed
//! vocab_version <hex>
//! vocab_size <V>
//! rows <R>
//! <R lines: vocab_id unigram_count>
//! input
//! <R lines of D values>
//! output
//! <R lines of D values>
//! topics
//! <K lines of D values>
//! doc_logits <P>
//! <P lines of K values>
//! ```
//!
//! Floats use the shortest decimal form that parses back to the same bits.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{HybridError, HybridModel, HybridTrainConfig};

pub const MODEL_FORMAT: &str = "mustas-hybrid";
const VERSION: &str = "1";

fn write_rows(s: &mut String, values: &[f64], width: usize) {
    for row in values.chunks(width.max(1)) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
}

fn body(m: &HybridModel) -> String {
    let c = &m.config;
    let mut s = String::new();
    writeln!(s, "k {}", m.k).unwrap();
    writeln!(s, "dim {}", m.dim).unwrap();
    writeln!(s, "learning_rate {}", c.learning_rate).unwrap();
    writeln!(s, "epochs {}", c.epochs).unwrap();
    writeln!(s, "negative_samples {}", c.negative_samples).unwrap();
    writeln!(s, "window {}", c.window).unwrap();
    writeln!(s, "lambda {}", c.lambda).unwrap();
    writeln!(s, "alpha_prior {}", c.alpha_prior).unwrap();
    writeln!(s, "seed {}", c.seed).unwrap();
    writeln!(s, "vocab_version {}", m.vocab_version).unwrap();
    writeln!(s, "vocab_size {}", m.row_of.len()).unwrap();
    writeln!(s, "rows {}", m.vocab_ids.len()).unwrap();
    for (id, count) in m.vocab_ids.iter().zip(&m.unigram_counts) {
        writeln!(s, "{id} {count}").unwrap();
    }
    s.push_str("input\n");
    write_rows(&mut s, &m.input_vectors, m.dim);
    s.push_str("output\n");
    write_rows(&mut s, &m.output_vectors, m.dim);
    s.push_str("topics\n");
    write_rows(&mut s, &m.topic_vectors, m.dim);
    writeln!(s, "doc_logits {}", m.paragraphs()).unwrap();
    write_rows(&mut s, &m.doc_logits, m.k);
    s
}

fn id_of_body(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    format!("hyb-{}", hex::encode(&digest[..8]))
}

pub(super) fn content_id(m: &HybridModel) -> String {
    id_of_body(&body(m))
}

pub(super) fn to_bytes(m: &HybridModel) -> Vec<u8> {
    let body = body(m);
    format!("{MODEL_FORMAT} {VERSION}\nmodel_id {}\n{body}", id_of_body(&body)).into_bytes()
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), HybridError> {
        self.inner
            .next()
            .map(|(i, l)| (i + 3, l))
            .ok_or_else(|| err(0, "unexpected end of file"))
    }

    fn field<T: std::str::FromStr>(&mut self, name: &str) -> Result<T, HybridError> {
        let (n, line) = self.next()?;
        line.strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, &format!("expected {name}")))
    }

    fn marker(&mut self, name: &str) -> Result<(), HybridError> {
        let (n, line) = self.next()?;
        if line == name {
            Ok(())
        } else {
            Err(err(n, &format!("expected {name}")))
        }
    }

    fn matrix(&mut self, rows: usize, width: usize) -> Result<Vec<f64>, HybridError> {
        let mut out = Vec::with_capacity(rows * width);
        for _ in 0..rows {
            let (n, line) = self.next()?;
            let row: Vec<f64> = if width == 0 {
                Vec::new()
            } else {
                line.split(' ')
                    .map(|v| v.parse::<f64>().map_err(|_| err(n, "bad number")))
                    .collect::<Result<_, _>>()?
            };
            if row.len() != width {
                return Err(err(n, "wrong row width"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(err(n, "non-finite value"));
            }
            out.extend(row);
        }
        Ok(out)
    }
}

fn err(line: usize, message: &str) -> HybridError {
    HybridError::ModelFormat {
        line,
        message: message.to_string(),
    }
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<HybridModel, HybridError> {
    let text = std::str::from_utf8(bytes).map_err(|_| err(0, "not UTF-8"))?;
    let mut head = text.splitn(3, '\n');
    if head.next() != Some(&format!("{MODEL_FORMAT} {VERSION}")[..]) {
        return Err(err(1, "not a hybrid model of a supported version"));
    }
    let stored_id = head
        .next()
        .and_then(|l| l.strip_prefix("model_id "))
        .ok_or_else(|| err(2, "missing model_id"))?
        .to_string();
    let body = head.next().unwrap_or("");
    let mut lines = Lines {
        inner: body.lines().enumerate(),
    };

    let k: usize = lines.field("k")?;
    let dim: usize = lines.field("dim")?;
    let config = HybridTrainConfig {
        learning_rate: lines.field("learning_rate")?,
        epochs: lines.field("epochs")?,
        negative_samples: lines.field("negative_samples")?,
        window: lines.field("window")?,
        lambda: lines.field("lambda")?,
        alpha_prior: lines.field("alpha_prior")?,
        seed: lines.field("seed")?,
    };
    config.validate()?;
    let vocab_version: String = lines.field("vocab_version")?;
    let vocab_size: usize = lines.field("vocab_size")?;
    let n_rows: usize = lines.field("rows")?;
    let mut vocab_ids = Vec::with_capacity(n_rows);
    let mut unigram_counts = Vec::with_capacity(n_rows);
    let mut row_of = vec![None; vocab_size];
    for r in 0..n_rows {
        let (n, line) = lines.next()?;
        let mut parts = line.split(' ');
        let id: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "bad vocab id"))?;
        let count: u64 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "bad count"))?;
        let slot = row_of
            .get_mut(id as usize)
            .ok_or_else(|| err(n, "vocab id outside vocab_size"))?;
        if slot.is_some() {
            return Err(err(n, "duplicate vocab id"));
        }
        *slot = Some(r as u32);
        vocab_ids.push(id);
        unigram_counts.push(count);
    }
    lines.marker("input")?;
    let input_vectors = lines.matrix(n_rows, dim)?;
    lines.marker("output")?;
    let output_vectors = lines.matrix(n_rows, dim)?;
    lines.marker("topics")?;
    let topic_vectors = lines.matrix(k, dim)?;
    let paragraphs: usize = lines.field("doc_logits")?;
    let doc_logits = lines.matrix(paragraphs, k)?;

    let model = HybridModel {
        k,
        dim,
        config,
        vocab_version,
        row_of,
        vocab_ids,
        unigram_counts,
        input_vectors,
        output_vectors,
        topic_vectors,
        doc_logits,
    };
    if model.model_id() != stored_id {
        return Err(err(2, "model_id does not match content"));
    }
    Ok(model)
}
