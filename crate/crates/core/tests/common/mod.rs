#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use mustas::ingest::Platform;
use mustas::store::{EntryStatus, StoredEntry};
use mustas::TopicDistribution;
use rand::Rng;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub const PERSONS: [(&str, &str); 5] = [
    ("anna-virtanen", "Green"),
    ("mikko-laine", "Coalition"),
    ("sari-koski", "Social Democrats"),
    ("jussi-nieminen", "Centre"),
    ("liisa-heikkinen", "Green"),
];

pub fn year_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap()
}

pub fn random_theta<R: Rng>(rng: &mut R, k: usize) -> TopicDistribution {
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>().powi(2) + 1e-6).collect();
    TopicDistribution::from_weights(w).unwrap()
}

/// Entries spread over 2023 with random persons, platforms, token counts
/// (some zero) and roughly one in ten quarantined.
pub fn random_entries<R: Rng>(rng: &mut R, n: usize, k: usize, model_id: &str) -> Vec<StoredEntry> {
    (0..n)
        .map(|i| {
            let (person, party) = PERSONS[rng.gen_range(0..PERSONS.len())];
            let secs = rng.gen_range(0..365 * 86_400);
            StoredEntry {
                doc_id: format!("{:016x}", rng.gen::<u64>() ^ i as u64),
                model_id: model_id.into(),
                person_id: person.into(),
                party: party.into(),
                platform: Platform::ALL[rng.gen_range(0..4)],
                timestamp: year_start() + Duration::seconds(secs),
                source_url: format!("https://example.org/{i}"),
                theta: random_theta(rng, k),
                paragraph_count: 1,
                token_count: if rng.gen_bool(0.05) { 0 } else { rng.gen_range(1..400) },
                paragraphs: None,
                status: if rng.gen_bool(0.1) {
                    EntryStatus::Quarantined
                } else {
                    EntryStatus::Active
                },
                metadata: BTreeMap::new(),
            }
        })
        .collect()
}

/// The document an entry was derived from.
pub fn document_of(e: &StoredEntry) -> mustas::ingest::Document {
    mustas::ingest::Document {
        doc_id: e.doc_id.clone(),
        person: mustas::ingest::PersonRef {
            id: e.person_id.clone(),
            display_name: e.person_id.replace('-', " "),
            party: e.party.clone(),
        },
        party: e.party.clone(),
        platform: e.platform,
        timestamp: e.timestamp,
        source_url: e.source_url.clone(),
        text: format!("document {}", e.doc_id),
        ingest_time: e.timestamp,
        metadata: e.metadata.clone(),
    }
}

pub fn model_record(model_id: &str, k: usize) -> mustas::store::ModelRecord {
    mustas::store::ModelRecord {
        model_id: model_id.into(),
        backend: mustas::store::Backend::Lda,
        k,
        created_at: year_start(),
        config: serde_json::json!({ "k": k }),
        vocab_version: "test".into(),
        artifact_path: String::new(),
        status: mustas::store::ModelStatus::Staged,
        checksum: None,
    }
}

/// Copies the fixture corpus into `dir` and writes a pipeline config with
/// the given extra TOML appended. Returns the config path.
pub fn corpus_workspace(dir: &std::path::Path, extra: &str) -> PathBuf {
    let src = fixtures();
    std::fs::create_dir_all(dir).unwrap();
    for f in ["feed.jsonl", "blog.rss", "persons.toml", "sources.toml"] {
        std::fs::copy(src.join(f), dir.join(f)).unwrap();
    }
    std::fs::create_dir_all(dir.join("transcripts")).unwrap();
    for entry in std::fs::read_dir(src.join("transcripts")).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, dir.join("transcripts").join(p.file_name().unwrap())).unwrap();
    }
    let cfg = dir.join("mustas.toml");
    std::fs::write(
        &cfg,
        format!(
            "store = \"store\"\nsources = \"sources.toml\"\npersons = \"persons.toml\"\n\
             [textprep]\ntarget_len = 40\n{extra}"
        ),
    )
    .unwrap();
    cfg
}

/// Ingests the fixture corpus, trains a small LDA model with `seed` and
/// releases it. Returns the loaded config and the model id.
pub fn released_corpus(dir: &std::path::Path, k: usize, seed: u64) -> (mustas::cli::PipelineConfig, String) {
    let cfg_path = corpus_workspace(
        dir,
        &format!("[lda]\nk = {k}\niterations = 80\nburn_in = 20\ninfer_iterations = 30\n"),
    );
    let cfg = mustas::cli::PipelineConfig::load(&cfg_path).unwrap();
    let now = Utc.with_ymd_and_hms(2024, 1, 15, 0, 0, 0).unwrap();
    let mut log = Vec::new();
    mustas::cli::ingest(&cfg, None, now, &mut log).unwrap();
    let opts = mustas::cli::TrainOptions { seed, k: None, backend: None };
    let report = mustas::cli::train(&cfg, &opts, now, &mut log).unwrap();
    mustas::cli::release(&cfg, &report.model_id).unwrap();
    (cfg, report.model_id)
}
