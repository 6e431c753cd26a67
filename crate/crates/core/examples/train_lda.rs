//! Trains the Gibbs sampler on a synthetic corpus with three disjoint word
//! blocks and shows that each block comes back as a topic.
//!
//! cargo run --example train_lda

use mustas::lda::{self, top_words, LdaConfig, VocabRef};
use mustas::synthetic::block_corpus;
use mustas::textprep::Vocabulary;

fn main() {
    let corpus = block_corpus(3, 10, 200, 50, 0.3, 7);
    let words = (0..corpus.vocab_size()).map(|w| format!("{}{w:02}", ["eco", "env", "edu"][w / 10]));
    let vocab = Vocabulary::from_word_list(words).unwrap();

    let config = LdaConfig { k: 3, alpha: 0.1, beta: 0.01, iterations: 300, burn_in: 100, seed: 1 };
    let fit = lda::train_traced(&corpus.paragraphs, VocabRef::from(&vocab), &config).unwrap();

    for (sweep, pp) in fit.perplexity_trace.iter().enumerate().step_by(50) {
        println!("sweep {:>3}: perplexity {pp:.3}", sweep + 1);
    }
    println!("model {}", fit.model.model_id());
    for t in 0..3 {
        let top: Vec<String> = top_words(&fit.model, &vocab, t, 5)
            .unwrap()
            .into_iter()
            .map(|(w, p)| format!("{w}:{p:.3}"))
            .collect();
        println!("topic {t}: {}", top.join(" "));
    }
}
