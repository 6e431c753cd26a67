//! Fetches the three bundled fixture sources and normalizes them.
//!
//! cargo run --example ingest_feeds

use std::collections::HashSet;
use std::path::PathBuf;

use chrono::Utc;
use mustas::ingest::{dedupe, fetch, load_registry, load_sources, normalize};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let registry = load_registry(&fixtures.join("persons.toml"))?;
    let sources = load_sources(&fixtures.join("sources.toml"), &registry)?;

    let mut docs = Vec::new();
    for source in &sources {
        let raw = fetch(source, &HashSet::new())?;
        let mut kept = 0;
        for r in &raw {
            match normalize(r, &registry, source, Utc::now()) {
                Ok(doc) => {
                    docs.push(doc);
                    kept += 1;
                }
                Err(e) => println!("  skipped {}: {e}", r.external_id),
            }
        }
        println!("{:<8} {:?}: fetched {}, normalized {kept}", source.source_id, source.kind, raw.len());
    }

    let docs = dedupe(docs);
    println!("{} unique documents", docs.len());
    if let Some(d) = docs.first() {
        println!("first: {} by {} ({}) on {} at {}", d.doc_id, d.person.display_name, d.party, d.platform, d.timestamp);
    }
    Ok(())
}
