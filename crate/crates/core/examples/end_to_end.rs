//! Drives the command-line interface through a full run: ingest, train,
//! release, infer and export.
//!
//! cargo run --example end_to_end

use std::path::Path;

fn mustas(config: &Path, args: &[&str]) -> String {
    let mut argv = vec!["mustas", "--config", config.to_str().unwrap()];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = mustas::cli::run(argv, &mut out, &mut err);
    let out = String::from_utf8(out).unwrap().trim().to_string();
    println!("$ mustas {}\n  exit {code}  {out}", args.join(" "));
    if !err.is_empty() {
        println!("  stderr: {}", String::from_utf8_lossy(&err).trim());
    }
    out
}

fn main() -> std::io::Result<()> {
    let dir = tempfile::tempdir()?;
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for f in ["feed.jsonl", "blog.rss", "persons.toml", "sources.toml", "mustas.toml"] {
        std::fs::copy(fixtures.join(f), dir.path().join(f))?;
    }
    std::fs::create_dir_all(dir.path().join("transcripts"))?;
    for entry in std::fs::read_dir(fixtures.join("transcripts"))? {
        let p = entry?.path();
        std::fs::copy(&p, dir.path().join("transcripts").join(p.file_name().unwrap()))?;
    }
    let config = dir.path().join("mustas.toml");

    mustas(&config, &["ingest"]);
    let model = mustas(&config, &["train", "--seed", "2023"]);
    mustas(&config, &["train", "--seed", "2023"]);
    mustas(&config, &["infer", "--model", &model, "--seed", "1"]);
    mustas(&config, &["release", "--model", &model]);
    mustas(&config, &["infer", "--model", &model, "--seed", "1"]);
    let out = dir.path().join("entries.jsonl");
    mustas(&config, &["export", "--model", &model, "--out", out.to_str().unwrap()]);
    let first = std::fs::read_to_string(&out)?.lines().next().unwrap_or_default().to_string();
    println!("first exported entry: {}...", first.chars().take(200).collect::<String>());
    Ok(())
}
