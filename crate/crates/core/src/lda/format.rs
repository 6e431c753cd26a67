//! Flat-text model artifact.
//!
//! ```text
//! mustas-lda 1
//! model_id lda-<16 hex>
//! k <K>
//! alpha <f64>
//! beta <f64>
//! iterations <n>
//! burn_in <n>
//! seed <u64>
//! vocab_version <hex>
//! vocab_size <V>
//! counts
//! <K lines of V space-separated topic-word counts>
//! ```
//!
//! The model id is the first 16 hex digits of the SHA-256 of everything after
//! the `model_id` line, so equal models always share an id.

use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{LdaConfig, LdaError, LdaModel, VocabRef};

pub const MODEL_FORMAT: &str = "mustas-lda";
const VERSION: &str = "1";

fn body(model: &LdaModel) -> String {
    let c = &model.config;
    let mut s = String::new();
    writeln!(s, "k {}", c.k).unwrap();
    writeln!(s, "alpha {}", c.alpha).unwrap();
    writeln!(s, "beta {}", c.beta).unwrap();
    writeln!(s, "iterations {}", c.iterations).unwrap();
    writeln!(s, "burn_in {}", c.burn_in).unwrap();
    writeln!(s, "seed {}", c.seed).unwrap();
    writeln!(s, "vocab_version {}", model.vocab_version).unwrap();
    writeln!(s, "vocab_size {}", model.vocab_size).unwrap();
    s.push_str("counts\n");
    for row in model.n_kw.chunks(model.vocab_size) {
        let mut first = true;
        for c in row {
            if !first {
                s.push(' ');
            }
            first = false;
            write!(s, "{c}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn id_of_body(body: &str) -> String {
    let digest = Sha256::digest(body.as_bytes());
    format!("lda-{}", hex::encode(&digest[..8]))
}

pub(super) fn content_id(model: &LdaModel) -> String {
    id_of_body(&body(model))
}

pub(super) fn to_bytes(model: &LdaModel) -> Vec<u8> {
    let body = body(model);
    format!("{MODEL_FORMAT} {VERSION}\nmodel_id {}\n{body}", id_of_body(&body)).into_bytes()
}

pub(super) fn from_bytes(bytes: &[u8]) -> Result<LdaModel, LdaError> {
    let err = |line: usize, message: &str| LdaError::Format {
        line,
        message: message.to_string(),
    };
    let text = std::str::from_utf8(bytes).map_err(|_| err(0, "not UTF-8"))?;
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().ok_or_else(|| err(1, "empty file"))?;
    if header.trim_end() != format!("{MODEL_FORMAT} {VERSION}") {
        return Err(err(1, "not an LDA model of a supported version"));
    }
    let id_line = lines.next().ok_or_else(|| err(2, "missing model_id"))?;
    let stored_id = id_line
        .trim_end()
        .strip_prefix("model_id ")
        .ok_or_else(|| err(2, "missing model_id"))?
        .to_string();
    let body: String = lines.collect();

    let mut it = body.lines().enumerate().map(|(i, l)| (i + 3, l));
    let mut field = |name: &str| -> Result<(usize, String), LdaError> {
        let (n, line) = it.next().ok_or_else(|| err(0, &format!("missing {name}")))?;
        let value = line
            .strip_prefix(name)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| err(n, &format!("expected {name}")))?;
        Ok((n, value.to_string()))
    };
    fn parse<T: std::str::FromStr>(
        (n, v): (usize, String),
        name: &str,
    ) -> Result<T, LdaError> {
        v.parse().map_err(|_| LdaError::Format {
            line: n,
            message: format!("bad {name}"),
        })
    }
    let config = LdaConfig {
        k: parse(field("k")?, "k")?,
        alpha: parse(field("alpha")?, "alpha")?,
        beta: parse(field("beta")?, "beta")?,
        iterations: parse(field("iterations")?, "iterations")?,
        burn_in: parse(field("burn_in")?, "burn_in")?,
        seed: parse(field("seed")?, "seed")?,
    };
    let vocab_version = field("vocab_version")?.1;
    let vocab_size: usize = parse(field("vocab_size")?, "vocab_size")?;
    let (n, marker) = it.next().ok_or_else(|| err(0, "missing counts"))?;
    if marker != "counts" {
        return Err(err(n, "expected counts"));
    }
    let mut n_kw = Vec::with_capacity(config.k * vocab_size);
    let mut rows = 0;
    for (n, line) in it {
        let row: Vec<u64> = line
            .split(' ')
            .map(|c| c.parse().map_err(|_| err(n, "bad count")))
            .collect::<Result<_, _>>()?;
        if row.len() != vocab_size {
            return Err(err(n, "row length differs from vocab_size"));
        }
        n_kw.extend(row);
        rows += 1;
    }
    if rows != config.k {
        return Err(err(0, "number of count rows differs from k"));
    }
    let model = LdaModel::from_counts(
        config,
        VocabRef {
            size: vocab_size,
            version: vocab_version,
        },
        n_kw,
    )?;
    if model.model_id != stored_id {
        return Err(err(2, "model_id does not match content"));
    }
    Ok(model)
}
