//! Tokenization, vocabulary construction and paragraph segmentation.
//!
//! Documents of very different lengths (a tweet, a forty-minute speech) are
//! cut into paragraphs of similar size so that topic inference runs on
//! comparable units. Splitting works on in-vocabulary token counts only:
//! with `n` kept tokens and a target length `t`, a document yields
//! `m = ceil(n / t)` paragraphs whose sizes differ by at most one, larger
//! paragraphs first.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_TARGET_LEN: usize = 150;

const VOCAB_FORMAT: &str = "mustas-vocab";
const VOCAB_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("no word survives the vocabulary filters")]
    EmptyVocabulary,
    #[error("invalid vocabulary parameters: {0}")]
    InvalidParameters(String),
    #[error("vocabulary file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercased word tokens of one document, in text order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<String>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Splits on every non-alphanumeric character, lowercases, and drops
/// single-character and purely numeric tokens.
pub fn tokenize(text: &str) -> TokenSeq {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !t.chars().all(char::is_numeric))
        .map(str::to_lowercase)
        .filter(|t| t.chars().count() > 1)
        .collect();
    TokenSeq(tokens)
}

/// Reads a stopword list: UTF-8, one word per line, `#` starts a comment.
pub fn parse_stopwords(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, TextprepError> {
    Ok(parse_stopwords(&fs::read_to_string(path)?))
}

/// The small English list shipped with the crate.
pub fn default_english_stopwords() -> HashSet<String> {
    parse_stopwords(include_str!("../data/stopwords_en.txt"))
}

/// Dense word ids `0..V`, ordered by descending corpus frequency with
/// lexicographic tie-break.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    min_count: u64,
    max_doc_fraction: f64,
}

impl Vocabulary {
    fn from_entries(
        entries: Vec<(String, u64)>,
        min_count: u64,
        max_doc_fraction: f64,
    ) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i as u32))
            .collect();
        let (words, counts) = entries.into_iter().unzip();
        Self {
            words,
            counts,
            index,
            min_count,
            max_doc_fraction,
        }
    }

    /// Vocabulary over an explicit word list; ids follow list order and
    /// counts are left at zero.
    pub fn from_word_list<I, S>(words: I) -> Result<Self, TextprepError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let entries: Vec<(String, u64)> = words.into_iter().map(|w| (w.into(), 0)).collect();
        if entries.is_empty() {
            return Err(TextprepError::EmptyVocabulary);
        }
        let vocab = Self::from_entries(entries, 1, 1.0);
        if vocab.index.len() != vocab.words.len() {
            return Err(TextprepError::InvalidParameters("duplicate word".into()));
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id_of(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn word_of(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn count_of(&self, id: u32) -> Option<u64> {
        self.counts.get(id as usize).copied()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn max_doc_fraction(&self) -> f64 {
        self.max_doc_fraction
    }

    /// Writes the versioned flat file: a header line, then one
    /// `id<TAB>word<TAB>count` triple per line.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "{VOCAB_FORMAT} {VOCAB_FORMAT_VERSION} min_count={} max_doc_fraction={}",
            self.min_count, self.max_doc_fraction
        )?;
        for (i, (w, c)) in self.words.iter().zip(&self.counts).enumerate() {
            writeln!(out, "{i}\t{w}\t{c}")?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, TextprepError> {
        let mut lines = input.lines();
        let header = lines.next().transpose()?.ok_or(TextprepError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let bad = |line: usize, message: &str| TextprepError::Format {
            line,
            message: message.to_string(),
        };
        let mut parts = header.split(' ');
        if parts.next() != Some(VOCAB_FORMAT) {
            return Err(bad(1, "not a vocabulary file"));
        }
        if parts.next() != Some("1") {
            return Err(bad(1, "unsupported format version"));
        }
        let min_count = parts
            .next()
            .and_then(|p| p.strip_prefix("min_count="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "bad min_count"))?;
        let max_doc_fraction = parts
            .next()
            .and_then(|p| p.strip_prefix("max_doc_fraction="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad(1, "bad max_doc_fraction"))?;

        let mut entries = Vec::new();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            let line = line?;
            let mut fields = line.split('\t');
            let (Some(id), Some(word), Some(count), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(bad(line_no, "expected id, word and count"));
            };
            let id: usize = id.parse().map_err(|_| bad(line_no, "bad id"))?;
            if id != entries.len() {
                return Err(bad(line_no, "ids must be dense and ascending"));
            }
            let count: u64 = count.parse().map_err(|_| bad(line_no, "bad count"))?;
            entries.push((word.to_string(), count));
        }
        let vocab = Self::from_entries(entries, min_count, max_doc_fraction);
        if vocab.index.len() != vocab.words.len() {
            return Err(bad(0, "duplicate word"));
        }
        Ok(vocab)
    }

    /// Short content hash identifying this exact vocabulary.
    pub fn version(&self) -> String {
        let digest = Sha256::digest(self.to_bytes());
        hex::encode(&digest[..8])
    }
}

/// Keeps words that occur at least `min_count` times, appear in at most
/// `max_doc_fraction` of the documents, and are not stopwords.
pub fn build_vocabulary(
    corpus: &[TokenSeq],
    min_count: u64,
    max_doc_fraction: f64,
    stopwords: &HashSet<String>,
) -> Result<Vocabulary, TextprepError> {
    if min_count < 1 {
        return Err(TextprepError::InvalidParameters(
            "min_count must be at least 1".into(),
        ));
    }
    if !(max_doc_fraction > 0.0 && max_doc_fraction <= 1.0) {
        return Err(TextprepError::InvalidParameters(
            "max_doc_fraction must lie in (0, 1]".into(),
        ));
    }

    let mut freq: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for doc in corpus {
        let mut seen: HashSet<&str> = HashSet::new();
        for tok in doc.iter() {
            let e = freq.entry(tok).or_default();
            e.0 += 1;
            if seen.insert(tok) {
                e.1 += 1;
            }
        }
    }

    let n_docs = corpus.len() as f64;
    let mut kept: Vec<(String, u64)> = freq
        .into_iter()
        .filter(|(w, (count, df))| {
            *count >= min_count
                && (*df as f64 / n_docs) <= max_doc_fraction
                && !stopwords.contains(*w)
        })
        .map(|(w, (count, _))| (w.to_string(), count))
        .collect();
    if kept.is_empty() {
        return Err(TextprepError::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(Vocabulary::from_entries(kept, min_count, max_doc_fraction))
}

/// Maps tokens to ids, dropping out-of-vocabulary tokens.
pub fn encode<'a, I>(tokens: I, vocab: &Vocabulary) -> Vec<u32>
where
    I: IntoIterator<Item = &'a str>,
{
    tokens.into_iter().filter_map(|t| vocab.id_of(t)).collect()
}

pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Vec<String> {
    ids.iter()
        .filter_map(|&id| vocab.word_of(id).map(str::to_string))
        .collect()
}

/// A similar-length span of a document: the unit of topic inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub para_id: String,
    pub doc_id: String,
    pub index: usize,
    pub token_ids: Vec<u32>,
    /// Half-open token range in the parent [`TokenSeq`]. The spans of a
    /// document's paragraphs partition the whole sequence, so concatenating
    /// them and dropping out-of-vocabulary tokens reproduces the in-vocabulary
    /// sequence.
    pub raw_span: (usize, usize),
}

impl Paragraph {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

/// Balanced paragraph sizes for `n` tokens around `target_len`.
pub fn paragraph_sizes(n: usize, target_len: usize) -> Vec<usize> {
    assert!(target_len >= 1, "target_len must be at least 1");
    if n == 0 {
        return Vec::new();
    }
    let m = n.div_ceil(target_len);
    let base = n / m;
    let larger = n % m;
    (0..m).map(|i| if i < larger { base + 1 } else { base }).collect()
}

pub fn segment(
    doc_id: &str,
    doc_tokens: &TokenSeq,
    vocab: &Vocabulary,
    target_len: usize,
) -> Vec<Paragraph> {
    let kept: Vec<(usize, u32)> = doc_tokens
        .iter()
        .enumerate()
        .filter_map(|(pos, t)| vocab.id_of(t).map(|id| (pos, id)))
        .collect();
    let sizes = paragraph_sizes(kept.len(), target_len);

    let mut paragraphs = Vec::with_capacity(sizes.len());
    let mut cursor = 0;
    let mut span_start = 0;
    for (index, size) in sizes.iter().enumerate() {
        let chunk = &kept[cursor..cursor + size];
        cursor += size;
        let span_end = if index + 1 == sizes.len() {
            doc_tokens.len()
        } else {
            chunk.last().map(|(pos, _)| pos + 1).unwrap_or(span_start)
        };
        paragraphs.push(Paragraph {
            para_id: format!("{doc_id}:{index}"),
            doc_id: doc_id.to_string(),
            index,
            token_ids: chunk.iter().map(|&(_, id)| id).collect(),
            raw_span: (span_start, span_end),
        });
        span_start = span_end;
    }
    paragraphs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(words: &[&str]) -> TokenSeq {
        TokenSeq(words.iter().map(|w| w.to_string()).collect())
    }

    fn vocab_of(words: &[&str]) -> Vocabulary {
        Vocabulary::from_entries(
            words.iter().map(|w| (w.to_string(), 1)).collect(),
            1,
            1.0,
        )
    }

    #[test]
    fn tokenize_folds_case_and_punctuation() {
        assert_eq!(
            tokenize("Climate, CLIMATE climate!"),
            seq(&["climate", "climate", "climate"])
        );
    }

    #[test]
    fn tokenize_drops_short_and_numeric() {
        assert_eq!(tokenize("x 42 CO2"), seq(&["co2"]));
        assert_eq!(tokenize(""), TokenSeq::default());
        assert_eq!(tokenize("Ääni, äänestys"), seq(&["ääni", "äänestys"]));
    }

    #[test]
    fn vocabulary_min_count() {
        let v = build_vocabulary(&[seq(&["a", "b"]), seq(&["a"])], 2, 1.0, &HashSet::new())
            .unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v.id_of("a"), Some(0));
        assert_eq!(v.id_of("b"), None);
    }

    #[test]
    fn vocabulary_doc_fraction() {
        let v = build_vocabulary(
            &[seq(&["the", "cat"]), seq(&["the", "dog"])],
            1,
            0.5,
            &HashSet::new(),
        )
        .unwrap();
        assert_eq!(v.id_of("the"), None);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn vocabulary_stopwords_and_empty() {
        let stop: HashSet<String> = ["cat".to_string()].into();
        let err = build_vocabulary(&[seq(&["cat"])], 1, 1.0, &stop).unwrap_err();
        assert!(matches!(err, TextprepError::EmptyVocabulary));
        assert!(matches!(
            build_vocabulary(&[seq(&["cat"])], 0, 1.0, &HashSet::new()),
            Err(TextprepError::InvalidParameters(_))
        ));
        assert!(matches!(
            build_vocabulary(&[seq(&["cat"])], 1, 0.0, &HashSet::new()),
            Err(TextprepError::InvalidParameters(_))
        ));
    }

    #[test]
    fn vocabulary_id_order() {
        let v = build_vocabulary(
            &[seq(&["b", "a", "c", "c", "b", "d"])],
            1,
            1.0,
            &HashSet::new(),
        )
        .unwrap();
        assert_eq!(v.words(), &["b", "c", "a", "d"]);
    }

    #[test]
    fn vocabulary_file_round_trip() {
        let corpus = [seq(&["alpha", "beta", "beta"]), seq(&["gamma"])];
        let v = build_vocabulary(&corpus, 1, 0.75, &HashSet::new()).unwrap();
        let bytes = v.to_bytes();
        let back = Vocabulary::read_from(&bytes[..]).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.version(), v.version());
    }

    #[test]
    fn vocabulary_file_rejects_gaps() {
        let text = "mustas-vocab 1 min_count=1 max_doc_fraction=1\n0\ta\t2\n2\tb\t1\n";
        assert!(matches!(
            Vocabulary::read_from(text.as_bytes()),
            Err(TextprepError::Format { line: 3, .. })
        ));
    }

    #[test]
    fn stopword_file_comments() {
        let s = parse_stopwords("# header\nthe\n  And  # trailing\n\n");
        assert_eq!(s.len(), 2);
        assert!(s.contains("and"));
        assert!(default_english_stopwords().contains("the"));
    }

    #[test]
    fn encode_drops_oov() {
        let v = vocab_of(&["a", "b"]);
        assert_eq!(encode(["a", "b", "zzz"], &v), vec![0, 1]);
        assert!(encode(["zzz"], &v).is_empty());
        assert_eq!(decode(&encode(["b", "q", "a"], &v), &v), vec!["b", "a"]);
    }

    #[test]
    fn sizes_follow_balanced_rule() {
        assert_eq!(paragraph_sizes(80, 100), vec![80]);
        assert_eq!(paragraph_sizes(250, 100), vec![84, 83, 83]);
        assert_eq!(paragraph_sizes(300, 100), vec![100, 100, 100]);
        assert!(paragraph_sizes(0, 100).is_empty());
    }

    #[test]
    fn segment_spans_partition_tokens() {
        let v = vocab_of(&["aa", "bb"]);
        let doc = seq(&["zz", "aa", "bb", "qq", "aa", "bb", "aa", "yy"]);
        let paras = segment("d1", &doc, &v, 2);
        let sizes: Vec<_> = paras.iter().map(Paragraph::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert_eq!(paras[0].raw_span, (0, 3));
        assert_eq!(paras[1].raw_span, (3, 6));
        assert_eq!(paras[2].raw_span, (6, 8));
        assert_eq!(paras[1].para_id, "d1:1");
        let rebuilt: Vec<&str> = paras
            .iter()
            .flat_map(|p| doc.0[p.raw_span.0..p.raw_span.1].iter())
            .map(String::as_str)
            .filter(|t| v.id_of(t).is_some())
            .collect();
        assert_eq!(rebuilt, vec!["aa", "bb", "aa", "bb", "aa"]);
    }

    #[test]
    fn segment_all_oov_is_empty() {
        let v = vocab_of(&["aa"]);
        assert!(segment("d", &seq(&["zz", "yy"]), &v, 5).is_empty());
    }
}
