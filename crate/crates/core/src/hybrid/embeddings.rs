use std::fs;
use std::path::Path;

use super::HybridError;
use crate::textprep::Vocabulary;

/// Static word vectors aligned with a vocabulary.
///
/// Only vocabulary words present in the source file get a row; rows are
/// ordered by ascending vocabulary id. Words without a vector are excluded
/// from hybrid training rather than zero-filled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    /// rows x dim, row-major.
    vectors: Vec<f64>,
    /// Vocabulary id of each row.
    vocab_ids: Vec<u32>,
    /// Row of each vocabulary id, if covered.
    row_of: Vec<Option<u32>>,
    vocab_version: String,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.vocab_ids.len()
    }

    /// Fraction of the vocabulary that has a vector.
    pub fn coverage(&self) -> f64 {
        if self.row_of.is_empty() {
            0.0
        } else {
            self.rows() as f64 / self.row_of.len() as f64
        }
    }

    pub fn row_of(&self, vocab_id: u32) -> Option<u32> {
        self.row_of.get(vocab_id as usize).copied().flatten()
    }

    pub fn vocab_id_of_row(&self, row: u32) -> u32 {
        self.vocab_ids[row as usize]
    }

    pub fn vector(&self, row: u32) -> &[f64] {
        let r = row as usize;
        &self.vectors[r * self.dim..(r + 1) * self.dim]
    }

    /// Version of the vocabulary the table was aligned to.
    pub fn vocab_version(&self) -> &str {
        &self.vocab_version
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    pub(super) fn into_parts(self) -> (usize, Vec<f64>, Vec<u32>, Vec<Option<u32>>) {
        (self.dim, self.vectors, self.vocab_ids, self.row_of)
    }
}

pub fn load_embeddings(path: &Path, vocab: &Vocabulary) -> Result<EmbeddingTable, HybridError> {
    let text = fs::read_to_string(path)?;
    parse_embeddings(&text, vocab)
}

/// Parses the text format: a `V D` header, then `word v1 ... vD` rows,
/// space separated.
pub fn parse_embeddings(text: &str, vocab: &Vocabulary) -> Result<EmbeddingTable, HybridError> {
    let fmt = |line: usize, message: &str| HybridError::Format {
        line,
        message: message.to_string(),
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| fmt(1, "missing header"))?;
    let mut head = header.split_whitespace();
    let (Some(n_rows), Some(dim), None) = (head.next(), head.next(), head.next()) else {
        return Err(fmt(1, "header must be `V D`"));
    };
    let n_rows: usize = n_rows.parse().map_err(|_| fmt(1, "bad row count"))?;
    let dim: usize = dim.parse().map_err(|_| fmt(1, "bad dimension"))?;
    if dim == 0 {
        return Err(fmt(1, "dimension must be at least 1"));
    }

    let mut found: Vec<Option<Vec<f64>>> = vec![None; vocab.len()];
    let mut seen_rows = 0;
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        seen_rows += 1;
        let mut fields = line.split_whitespace();
        let word = fields.next().ok_or_else(|| fmt(line_no, "missing word"))?;
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>().map_err(|_| fmt(line_no, "bad number")))
            .collect::<Result<_, _>>()?;
        if values.len() != dim {
            return Err(HybridError::DimensionMismatch {
                line: line_no,
                expected: dim,
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(fmt(line_no, "non-finite value"));
        }
        if let Some(id) = vocab.id_of(word) {
            let slot = &mut found[id as usize];
            if slot.is_none() {
                *slot = Some(values);
            }
        }
    }
    if seen_rows != n_rows {
        return Err(fmt(1, &format!("header announces {n_rows} rows, file has {seen_rows}")));
    }

    let mut vectors = Vec::new();
    let mut vocab_ids = Vec::new();
    let mut row_of = vec![None; vocab.len()];
    for (id, v) in found.into_iter().enumerate() {
        if let Some(v) = v {
            row_of[id] = Some(vocab_ids.len() as u32);
            vocab_ids.push(id as u32);
            vectors.extend(v);
        }
    }
    let table = EmbeddingTable {
        dim,
        vectors,
        vocab_ids,
        row_of,
        vocab_version: vocab.version(),
    };
    tracing::info!(
        rows = table.rows(),
        coverage = table.coverage(),
        "loaded embedding table"
    );
    Ok(table)
}
