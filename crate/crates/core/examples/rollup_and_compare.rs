//! Rolls document mixtures up into monthly buckets per party and compares
//! the two parties bucket by bucket.
//!
//! cargo run --example rollup_and_compare

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, TimeZone, Utc};
use mustas::aggregate::{compare_rollups, rollup, topic_share_of, Bucket, RollupQuery, Weighting};
use mustas::ingest::Platform;
use mustas::store::{EntryStatus, StoredEntry};
use mustas::TopicDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 4;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let start = Utc.with_ymd_and_hms(2023, 1, 1, 0, 0, 0).unwrap();
    let people = [("anna", "Green"), ("mikko", "Coalition"), ("sari", "Green")];
    let entries: Vec<StoredEntry> = (0..300)
        .map(|i| {
            let (person, party) = people[i % people.len()];
            // Greens lean towards topic 0, the Coalition towards topic 2.
            let mut w: Vec<f64> = (0..K).map(|_| rng.gen::<f64>()).collect();
            w[if party == "Green" { 0 } else { 2 }] += 2.0;
            StoredEntry {
                doc_id: format!("doc-{i:04}"),
                model_id: "demo".into(),
                person_id: person.into(),
                party: party.into(),
                platform: Platform::ALL[i % 4],
                timestamp: start + Duration::hours(rng.gen_range(0..24 * 180)),
                source_url: format!("https://example.org/{i}"),
                theta: TopicDistribution::from_weights(w).unwrap(),
                paragraph_count: 1,
                token_count: rng.gen_range(20..400),
                paragraphs: None,
                status: EntryStatus::Active,
                metadata: BTreeMap::new(),
            }
        })
        .collect();

    let party = |name: &str| {
        let mut q = RollupQuery::new("demo", start, start + Duration::days(181), Bucket::Month);
        q.parties = Some(BTreeSet::from([name.to_string()]));
        q.weighting = Weighting::PersonEqual;
        rollup(&entries, K, &q).unwrap()
    };
    let green = party("Green");
    let coalition = party("Coalition");

    let climate = topic_share_of(&green, &BTreeSet::from([0])).unwrap();
    for ((b, point), share) in green.buckets.iter().zip(compare_rollups(&green, &coalition).unwrap()).zip(climate) {
        println!(
            "{}  docs {:>3}  topic-0 share {share:.3}  divergence {}",
            b.start.format("%Y-%m"),
            b.document_count,
            point.divergence.map_or("-".into(), |d| format!("{d:.3}"))
        );
    }
}
