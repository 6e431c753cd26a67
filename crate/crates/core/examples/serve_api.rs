//! Builds a small store from the fixtures, starts the API on a free port
//! and queries every endpoint once.
//!
//! cargo run --example serve_api

use std::path::Path;

use chrono::Utc;
use mustas::cli::{self, PipelineConfig, TrainOptions};
use mustas::service::{self, ApiConfig, ApiOverrides};

fn workspace(dir: &Path) -> Result<PipelineConfig, Box<dyn std::error::Error>> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for f in ["feed.jsonl", "blog.rss", "persons.toml", "sources.toml"] {
        std::fs::copy(fixtures.join(f), dir.join(f))?;
    }
    std::fs::create_dir_all(dir.join("transcripts"))?;
    for entry in std::fs::read_dir(fixtures.join("transcripts"))? {
        let p = entry?.path();
        std::fs::copy(&p, dir.join("transcripts").join(p.file_name().unwrap()))?;
    }
    std::fs::write(
        dir.join("mustas.toml"),
        "store = \"store\"\nsources = \"sources.toml\"\npersons = \"persons.toml\"\n[lda]\nk = 8\niterations = 100\nburn_in = 40\n",
    )?;
    Ok(PipelineConfig::load(&dir.join("mustas.toml"))?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let cfg = workspace(dir.path())?;
    let log = &mut std::io::sink();
    cli::ingest(&cfg, None, Utc::now(), log)?;
    let model = cli::train(&cfg, &TrainOptions { seed: 1, k: None, backend: None }, Utc::now(), log)?.model_id;
    cli::release(&cfg, &model)?;

    let overrides = ApiOverrides { port: Some(8080), default_model: Some(model), ..Default::default() };
    let mut api = ApiConfig::resolve(&cfg, &overrides, |_| None)?;
    api.check()?;
    api.port = 0;

    let rt = tokio::runtime::Runtime::new()?;
    let listener = rt.block_on(service::bind(&api))?;
    let addr = listener.local_addr()?;
    rt.spawn(service::serve(listener, api));
    println!("serving on http://{addr}");

    let first_doc = {
        let store = mustas::store::Store::open_read_only(&cfg.store)?;
        store.documents(mustas::store::EntryStatus::Active, None)?[0].doc_id.clone()
    };
    let paths = [
        "/api/models".to_string(),
        "/api/topics".to_string(),
        "/api/rollup?from=2023-01-01&to=2024-01-01&bucket=quarter&parties=Green".to_string(),
        "/api/compare?left=from%3D2023-01-01%26to%3D2023-07-01&right=from%3D2023-07-01%26to%3D2024-01-01".to_string(),
        format!("/api/documents/{first_doc}"),
        "/api/rollup?from=2024-01-01&to=2023-01-01".to_string(),
    ];
    std::thread::spawn(move || -> Result<(), reqwest::Error> {
        for path in paths {
            let resp = reqwest::blocking::get(format!("http://{addr}{path}"))?;
            let status = resp.status();
            let body = resp.text()?;
            let preview: String = body.chars().take(160).collect();
            println!("GET {path}\n  {status}  {preview}...");
        }
        Ok(())
    })
    .join()
    .unwrap()?;
    Ok(())
}
