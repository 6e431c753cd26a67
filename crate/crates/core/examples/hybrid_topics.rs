//! Trains the embedding-based backend on two word clusters and shows how the
//! prior strength sharpens the paragraph mixtures.
//!
//! cargo run --example hybrid_topics

use mustas::hybrid::{doc_topics_hybrid, parse_embeddings, topic_words_hybrid, train_hybrid, HybridTrainConfig};
use mustas::synthetic::two_cluster_corpus;

fn main() {
    let corpus = two_cluster_corpus(10, 60, 30, 8, 31);
    let table = parse_embeddings(&corpus.embedding_file(), &corpus.vocabulary).unwrap();
    println!("{} embedded words, dimension {}", table.rows(), table.dim());

    for lambda in [0.0, 1.0, 10.0] {
        let mut config = HybridTrainConfig::new(5);
        config.lambda = lambda;
        let model = train_hybrid(&corpus.paragraphs, &table, 4, &config).unwrap();
        let entropy: f64 = (0..corpus.paragraphs.len())
            .map(|d| doc_topics_hybrid(&model, d).unwrap().entropy())
            .sum::<f64>()
            / corpus.paragraphs.len() as f64;
        println!("lambda {lambda:>4}: mean mixture entropy {entropy:.4}");
        if lambda == 10.0 {
            for t in 0..model.k {
                let words: Vec<String> = topic_words_hybrid(&model, &corpus.vocabulary, t, 4)
                    .unwrap()
                    .into_iter()
                    .map(|(w, _)| w)
                    .collect();
                println!("  topic {t}: {}", words.join(" "));
            }
        }
    }
}
