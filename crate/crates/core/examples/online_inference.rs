//! Folds unseen paragraphs into a frozen model and combines them into a
//! document mixture.
//!
//! cargo run --example online_inference

use mustas::aggregate::aggregate_document;
use mustas::lda::{self, LdaConfig, LdaModel, VocabRef};
use mustas::synthetic::{block_corpus, pure_topic_paragraphs};

fn main() {
    let corpus = block_corpus(3, 10, 200, 50, 0.3, 7);
    let vocab = VocabRef { size: corpus.vocab_size(), version: "blocks".into() };
    let config = LdaConfig { k: 3, alpha: 0.1, beta: 0.01, iterations: 200, burn_in: 50, seed: 1 };
    let fit = lda::train(&corpus.paragraphs, vocab, &config).unwrap();

    // Models are immutable and round-trip through their text format.
    let model = LdaModel::from_bytes(&fit.model.to_bytes()).unwrap();
    assert_eq!(model, fit.model);

    let unseen = pure_topic_paragraphs(3, 10, 5, 40, 99);
    let mut thetas = Vec::new();
    let mut weights = Vec::new();
    for (i, (block, tokens)) in unseen.iter().enumerate() {
        let theta = lda::infer(&model, tokens, 100, i as u64).unwrap();
        println!("paragraph from block {block}: dominant topic {} {:.3?}", theta.argmax(), theta.as_slice());
        weights.push(tokens.len() as u64);
        thetas.push(theta);
    }
    let doc = aggregate_document(3, &thetas, &weights).unwrap();
    println!("document mixture {:.3?}", doc.as_slice());
}
