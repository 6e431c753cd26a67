//! Registers, releases and retires models in a fresh store.
//!
//! cargo run --example model_registry

use chrono::Utc;
use mustas::lda::{self, LdaConfig};
use mustas::store::{Backend, ModelArtifacts, ModelRecord, ModelStatus, Store};
use mustas::synthetic::block_corpus;
use mustas::textprep::Vocabulary;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Store::open(dir.path())?;

    let corpus = block_corpus(3, 5, 60, 30, 0.3, 2);
    let vocab = Vocabulary::from_word_list((0..corpus.vocab_size()).map(|w| format!("w{w}")))?;
    for seed in [1, 2] {
        let config = LdaConfig { k: 3, alpha: 0.1, beta: 0.01, iterations: 50, burn_in: 10, seed };
        let fit = lda::train(&corpus.paragraphs, (&vocab).into(), &config)?;
        let record = ModelRecord {
            model_id: fit.model.model_id().to_string(),
            backend: Backend::Lda,
            k: 3,
            created_at: Utc::now(),
            config: serde_json::to_value(&config)?,
            vocab_version: vocab.version().to_string(),
            artifact_path: String::new(),
            status: ModelStatus::Staged,
            checksum: None,
        };
        let artifacts = ModelArtifacts { model: fit.model.to_bytes(), vocab: vocab.to_bytes() };
        store.register_model(&record, &artifacts)?;
    }

    let ids: Vec<String> = store.list_models()?.into_iter().map(|m| m.model_id).collect();
    let released = store.release_model(&ids[0])?;
    println!("released {} checksum {}", released.model_id, released.checksum.unwrap_or_default());
    store.retire_model(&ids[0])?;
    if let Err(e) = store.release_model(&ids[0]) {
        println!("cannot re-release: {e}");
    }
    for m in store.list_models()? {
        println!("{}  {:?}  k={}  vocab {}", m.model_id, m.status, m.k, m.vocab_version);
    }
    Ok(())
}
