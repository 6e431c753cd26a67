//! Tokenizes a few texts, builds a vocabulary and splits each document into
//! paragraphs of similar length.
//!
//! cargo run --example tokenize_and_segment

use std::collections::HashSet;

use mustas::textprep::{build_vocabulary, segment, tokenize, TokenSeq};

const TEXTS: [&str; 3] = [
    "The budget for railways grows next year. Railways connect Jyväskylä and Helsinki; the budget covers new tracks and stations.",
    "Hospitals need nurses. The waiting lists for hospitals grew, and nurses left for better wages. We must fund hospitals.",
    "Wind and solar energy cut emissions. Emissions from peat fell by 12% while wind capacity doubled (CO2 data from 2023).",
];

fn main() {
    let docs: Vec<TokenSeq> = TEXTS.iter().map(|t| tokenize(t)).collect();
    println!("tokens of the first text: {:?}", docs[0].0);

    let stop: HashSet<String> = ["the", "and", "for", "we", "by", "from", "while"].iter().map(|s| s.to_string()).collect();
    let vocab = build_vocabulary(&docs, 1, 1.0, &stop).expect("non-empty vocabulary");
    println!("vocabulary: {} words, version {}", vocab.len(), vocab.version());
    for id in 0..5 {
        println!("  {id}: {} x{}", vocab.word_of(id).unwrap(), vocab.count_of(id).unwrap());
    }

    for (d, doc) in docs.iter().enumerate() {
        let paragraphs = segment(&format!("doc-{d}"), doc, &vocab, 6);
        let sizes: Vec<usize> = paragraphs.iter().map(|p| p.token_ids.len()).collect();
        println!("doc-{d}: {} in-vocabulary tokens -> paragraph sizes {sizes:?}", sizes.iter().sum::<usize>());
    }
}
