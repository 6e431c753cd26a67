//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Write as _;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration as StdDuration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};
use mustas::aggregate::{aggregate_document, rollup, Bucket, RollupQuery, RollupResult, Weighting};
use mustas::cli::{self, InferOptions, PipelineConfig, TrainOptions};
use mustas::hybrid::{
    doc_topics_hybrid, hybrid_loss, hybrid_loss_and_gradient, parse_embeddings, train_hybrid,
    HybridModel, HybridTrainConfig, PairSample,
};
use mustas::ingest::Platform;
use mustas::lda::{self, LdaConfig, LdaFit, LdaModel, VocabRef};
use mustas::service::{self, ApiConfig, ApiOverrides, ErrorBody};
use mustas::store::{
    EntryFilter, EntryReader, EntryStatus, ModelArtifacts, Page, Store, StoredEntry,
};
use mustas::synthetic::{block_corpus, two_cluster_corpus, BlockCorpus};
use mustas::textprep::{build_vocabulary, segment, TokenSeq};
use mustas::TopicDistribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use tower::ServiceExt;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("synthetic topic recovery", topic_recovery),
        ("held-out inference", held_out_inference),
        ("perplexity sanity", perplexity_sanity),
        ("hybrid gradient check", gradient_check),
        ("hybrid sparsity trend", sparsity_trend),
        ("hybrid lambda=0 oracle", skip_gram_oracle),
        ("aggregation equivalence", aggregation_equivalence),
        ("segmentation properties", segmentation_properties),
        ("determinism", determinism),
        ("store integrity", store_integrity),
        ("service delegation equality", service_delegation),
        ("end-to-end", end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}  ({secs:.1}s)  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  ({secs:.1}s)  {why}");
            }
        }
        std::io::stdout().flush().unwrap();
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- LDA

const K3: usize = 3;
const BLOCK: usize = 10;

fn synthetic_config(seed: u64) -> LdaConfig {
    LdaConfig { k: K3, alpha: 0.1, beta: 0.01, iterations: 400, burn_in: 150, seed }
}

fn synthetic_corpus() -> BlockCorpus {
    block_corpus(K3, BLOCK, 200, 50, 0.3, 20_240_301)
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// The permutation `perm` with learned topic `perm[t]` matching true topic
/// `t` that maximises the smallest cosine, and that cosine.
fn match_topics(model: &LdaModel, truth: &[Vec<f64>]) -> (Vec<usize>, f64) {
    permutations(truth.len())
        .into_iter()
        .map(|perm| {
            let worst = (0..truth.len())
                .map(|t| cosine(model.phi_row(perm[t]), &truth[t]))
                .fold(f64::INFINITY, f64::min);
            (perm, worst)
        })
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

fn train_synthetic() -> (BlockCorpus, LdaFit, f64) {
    let corpus = synthetic_corpus();
    let vref = VocabRef { size: corpus.vocab_size(), version: "blocks".into() };
    let start = Instant::now();
    let fit = lda::train(&corpus.paragraphs, vref, &synthetic_config(11)).unwrap();
    (corpus, fit, start.elapsed().as_secs_f64())
}

fn topic_recovery() -> Outcome {
    let (corpus, fit, secs) = train_synthetic();
    ensure!(corpus.vocab_size() == 30 && corpus.paragraphs.len() == 200, "corpus shape");
    ensure!(corpus.paragraphs.iter().all(|p| p.len() == 50), "paragraph length");
    let (perm, worst) = match_topics(&fit.model, &corpus.topic_word);
    ensure!(worst >= 0.9, "smallest matched cosine {worst:.4} < 0.9 (perm {perm:?})");
    ensure!(secs < 60.0, "training took {secs:.1}s");
    Ok(format!("min cosine {worst:.4}, training {secs:.2}s"))
}

fn held_out_inference() -> Outcome {
    let (corpus, fit, _) = train_synthetic();
    let (perm, _) = match_topics(&fit.model, &corpus.topic_word);
    let held_out = block_corpus(K3, BLOCK, 100, 50, 0.3, 77_001);
    let mut correct = 0;
    for (i, (tokens, mix)) in held_out.paragraphs.iter().zip(&held_out.mixtures).enumerate() {
        let truth = (0..K3).max_by(|&a, &b| mix[a].total_cmp(&mix[b])).unwrap();
        let theta = lda::infer(&fit.model, tokens, 100, 1000 + i as u64).unwrap();
        if theta.argmax() == perm[truth] {
            correct += 1;
        }
    }
    ensure!(correct >= 80, "{correct}/100 dominant topics correct");
    Ok(format!("{correct}/100 dominant topics correct"))
}

fn perplexity_sanity() -> Outcome {
    let v = 30;
    let cfg = LdaConfig { k: K3, alpha: 0.1, beta: 0.01, iterations: 10, burn_in: 0, seed: 0 };
    let uniform =
        LdaModel::from_counts(cfg, VocabRef { size: v, version: "u".into() }, vec![0; K3 * v]).unwrap();
    let corpus = synthetic_corpus();
    let flat = TopicDistribution::uniform(K3);
    let pp = lda::perplexity(&uniform, corpus.paragraphs.iter().map(|p| (p.as_slice(), &flat))).unwrap();
    ensure!((pp - v as f64).abs() <= 1e-9, "uniform perplexity {pp} != {v}");

    let vref = VocabRef { size: corpus.vocab_size(), version: "blocks".into() };
    let fit = lda::train_traced(&corpus.paragraphs, vref, &synthetic_config(11)).unwrap();
    let (first, last) = (fit.perplexity_trace[0], *fit.perplexity_trace.last().unwrap());
    ensure!(last < first, "final perplexity {last} not below first {first}");
    Ok(format!("uniform {pp}, sweep 1 {first:.3} -> final {last:.3}"))
}

// ------------------------------------------------------------- hybrid

fn random_hybrid(rng: &mut ChaCha8Rng, lambda: f64) -> (HybridModel, PairSample) {
    let k = rng.gen_range(2..=5);
    let dim = rng.gen_range(2..=6);
    let rows = 8;
    let paragraphs = 3;
    let mut uniform = |n: usize, scale: f64| -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
    };
    let mut config = HybridTrainConfig::new(0);
    config.lambda = lambda;
    let input_vectors = uniform(rows * dim, 0.8);
    let output_vectors = uniform(rows * dim, 0.8);
    let topic_vectors = uniform(k * dim, 0.8);
    let doc_logits = uniform(paragraphs * k, 1.5);
    config.alpha_prior = rng.gen_range(0.05..0.95);
    let model = HybridModel {
        k,
        dim,
        config,
        vocab_version: "grad".into(),
        row_of: (0..rows as u32).map(Some).collect(),
        vocab_ids: (0..rows as u32).collect(),
        unigram_counts: vec![1; rows],
        input_vectors,
        output_vectors,
        topic_vectors,
        doc_logits,
    };
    let pair = PairSample {
        paragraph: rng.gen_range(0..paragraphs),
        pivot: rng.gen_range(0..rows as u32),
        context: rng.gen_range(0..rows as u32),
        negatives: (0..rng.gen_range(1..=4)).map(|_| rng.gen_range(0..rows as u32)).collect(),
    };
    (model, pair)
}

fn gradient_check() -> Outcome {
    const STEP: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let mut worst: f64 = 0.0;
    let instances = 150;
    for n in 0..instances {
        let lambda = if n % 5 == 0 { 0.0 } else { rng.gen_range(0.0..5.0) };
        let (model, pair) = random_hybrid(&mut rng, lambda);
        let (_, grad) = hybrid_loss_and_gradient(&model, &pair).unwrap();
        let (k, dim, d) = (model.k, model.dim, pair.paragraph);

        let mut analytic = grad.doc_logits.clone();
        analytic.extend(&grad.topic_vectors);
        for r in 0..model.rows() as u32 {
            match grad.output_vectors.get(&r) {
                Some(g) => analytic.extend(g),
                None => analytic.extend(vec![0.0; dim]),
            }
        }

        let mut numeric = Vec::with_capacity(analytic.len());
        let mut central = |field: fn(&mut HybridModel) -> &mut Vec<f64>, i: usize| {
            let mut plus = model.clone();
            field(&mut plus)[i] += STEP;
            let mut minus = model.clone();
            field(&mut minus)[i] -= STEP;
            let lp = hybrid_loss(&plus, &pair).unwrap();
            let lm = hybrid_loss(&minus, &pair).unwrap();
            numeric.push((lp - lm) / (2.0 * STEP));
        };
        for i in d * k..(d + 1) * k {
            central(|m| &mut m.doc_logits, i);
        }
        for i in 0..k * dim {
            central(|m| &mut m.topic_vectors, i);
        }
        for i in 0..model.rows() * dim {
            central(|m| &mut m.output_vectors, i);
        }

        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        let rel = diff / (na + nn).max(1e-12);
        ensure!(rel < 1e-4, "instance {n}: relative error {rel:e}");
        worst = worst.max(rel);
    }
    Ok(format!("{instances} instances, worst relative error {worst:.2e}"))
}

fn sparsity_trend() -> Outcome {
    let corpus = two_cluster_corpus(10, 60, 30, 8, 31);
    let table = parse_embeddings(&corpus.embedding_file(), &corpus.vocabulary).unwrap();
    let mut entropies = Vec::new();
    for lambda in [0.0, 1.0, 10.0] {
        let mut cfg = HybridTrainConfig::new(5);
        cfg.lambda = lambda;
        let model = train_hybrid(&corpus.paragraphs, &table, 4, &cfg).unwrap();
        let mean = (0..corpus.paragraphs.len())
            .map(|d| doc_topics_hybrid(&model, d).unwrap().entropy())
            .sum::<f64>()
            / corpus.paragraphs.len() as f64;
        entropies.push(mean);
    }
    ensure!(
        entropies.windows(2).all(|w| w[1] <= w[0]),
        "mean entropies {entropies:?} increase"
    );
    Ok(format!("mean entropy over lambda 0/1/10: {entropies:.4?}"))
}

/// Negative-sampling loss written out from the skip-gram definition, with
/// the context vector built from a plain softmax.
fn skip_gram_reference(model: &HybridModel, pair: &PairSample) -> f64 {
    let row = |w: u32| model.row_of[w as usize].unwrap() as usize;
    let logits = &model.doc_logits[pair.paragraph * model.k..(pair.paragraph + 1) * model.k];
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    let p: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
    let dim = model.dim;
    let pivot = row(pair.pivot);
    let c: Vec<f64> = (0..dim)
        .map(|i| {
            model.input_vectors[pivot * dim + i]
                + (0..model.k).map(|t| p[t] * model.topic_vectors[t * dim + i]).sum::<f64>()
        })
        .collect();
    let score = |w: u32| -> f64 {
        let r = row(w);
        (0..dim).map(|i| c[i] * model.output_vectors[r * dim + i]).sum()
    };
    let sigmoid = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut loss = -sigmoid(score(pair.context)).ln();
    for &n in &pair.negatives {
        loss -= sigmoid(-score(n)).ln();
    }
    loss
}

fn plain_sgns(model: &HybridModel, pair: &PairSample) -> f64 {
    let dim = model.dim;
    let vec_of = |m: &[f64], w: u32| {
        let r = model.row_of[w as usize].unwrap() as usize;
        m[r * dim..(r + 1) * dim].to_vec()
    };
    let pivot = vec_of(&model.input_vectors, pair.pivot);
    let dot = |w: u32| -> f64 {
        let o = vec_of(&model.output_vectors, w);
        pivot.iter().zip(&o).map(|(a, b)| a * b).sum()
    };
    let log_sigmoid = |x: f64| -(1.0 + (-x).exp()).ln();
    -log_sigmoid(dot(pair.context)) - pair.negatives.iter().map(|&n| log_sigmoid(-dot(n))).sum::<f64>()
}

fn skip_gram_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9090);
    let mut worst: f64 = 0.0;
    for n in 0..200 {
        let (model, pair) = random_hybrid(&mut rng, 0.0);
        let got = hybrid_loss(&model, &pair).unwrap();
        let want = skip_gram_reference(&model, &pair);
        ensure!((got - want).abs() <= 1e-10, "pair {n}: {got} vs {want}");
        worst = worst.max((got - want).abs());
    }
    // Topic contribution switched off: plain word-to-word skip-gram.
    for n in 0..200 {
        let (mut model, pair) = random_hybrid(&mut rng, 0.0);
        model.topic_vectors.iter_mut().for_each(|v| *v = 0.0);
        let got = hybrid_loss(&model, &pair).unwrap();
        let want = plain_sgns(&model, &pair);
        ensure!((got - want).abs() <= 1e-10, "plain pair {n}: {got} vs {want}");
        worst = worst.max((got - want).abs());
    }
    Ok(format!("400 pairs, worst difference {worst:.2e}"))
}

// -------------------------------------------------------- aggregation

/// Group-by over calendar months, summing in doc_id order.
fn brute_force_monthly(entries: &[StoredEntry], k: usize, keep: impl Fn(&StoredEntry) -> bool) -> Vec<(Vec<f64>, usize, u64)> {
    let mut groups: BTreeMap<u32, Vec<&StoredEntry>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.status == EntryStatus::Active && keep(e)) {
        groups.entry(e.timestamp.month()).or_default().push(e);
    }
    (1..=12)
        .map(|m| {
            let mut rows = groups.remove(&m).unwrap_or_default();
            if rows.is_empty() {
                return (vec![0.0; k], 0, 0);
            }
            rows.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            let total: f64 = rows.iter().map(|e| e.token_count as f64).sum();
            let mut acc = vec![0.0; k];
            for e in &rows {
                let w = if total <= 0.0 { 1.0 } else { e.token_count as f64 };
                for t in 0..k {
                    acc[t] += w * e.theta.as_slice()[t];
                }
            }
            let denom = if total <= 0.0 { rows.len() as f64 } else { total };
            for a in &mut acc {
                *a /= denom;
            }
            (acc, rows.len(), rows.iter().map(|e| e.token_count).sum())
        })
        .collect()
}

fn year_query(model: &str, bucket: Bucket) -> RollupQuery {
    RollupQuery::new(model, common::year_start(), common::year_start() + Duration::days(365), bucket)
}

fn aggregation_equivalence() -> Outcome {
    const K: usize = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let entries = common::random_entries(&mut rng, 10_000, K, "m");

    let mut q = year_query("m", Bucket::Month);
    let got = rollup(&entries, K, &q).unwrap();
    let want = brute_force_monthly(&entries, K, |_| true);
    ensure!(got.buckets.len() == 12, "{} buckets", got.buckets.len());
    for (b, (share, docs, tokens)) in got.buckets.iter().zip(&want) {
        ensure!(&b.topic_share == share, "bucket {} shares differ", b.start);
        ensure!((b.document_count, b.token_count) == (*docs, *tokens), "bucket {} counts", b.start);
    }

    q.platforms = Some(BTreeSet::from([Platform::Social, Platform::Blog]));
    q.parties = Some(BTreeSet::from(["Green".to_string()]));
    let got = rollup(&entries, K, &q).unwrap();
    let want = brute_force_monthly(&entries, K, |e| {
        matches!(e.platform, Platform::Social | Platform::Blog) && e.party == "Green"
    });
    for (b, (share, docs, _)) in got.buckets.iter().zip(&want) {
        ensure!(&b.topic_share == share && b.document_count == *docs, "filtered bucket {} differs", b.start);
    }

    // Paragraph-level inputs: documents aggregated first, then rolled up,
    // against a token-weighted mean over every paragraph of the month.
    let mut docs = Vec::new();
    let mut by_month: BTreeMap<u32, (Vec<f64>, f64)> = BTreeMap::new();
    for i in 0..2000 {
        let n = rng.gen_range(1..=6);
        let thetas: Vec<TopicDistribution> = (0..n).map(|_| common::random_theta(&mut rng, K)).collect();
        let weights: Vec<u64> = (0..n).map(|_| rng.gen_range(1..80)).collect();
        let ts = common::year_start() + Duration::seconds(rng.gen_range(0..365 * 86_400));
        let slot = by_month.entry(ts.month()).or_insert((vec![0.0; K], 0.0));
        for (theta, &w) in thetas.iter().zip(&weights) {
            for t in 0..K {
                slot.0[t] += w as f64 * theta.as_slice()[t];
            }
            slot.1 += w as f64;
        }
        let mut e = entries[i].clone();
        e.doc_id = format!("p{i:05}");
        e.status = EntryStatus::Active;
        e.timestamp = ts;
        e.theta = aggregate_document(K, &thetas, &weights).unwrap();
        e.token_count = weights.iter().sum();
        e.paragraph_count = n;
        docs.push(e);
    }
    let two_step = rollup(&docs, K, &year_query("m", Bucket::Month)).unwrap();
    let mut worst: f64 = 0.0;
    for b in &two_step.buckets {
        let (sum, total) = &by_month[&b.start.month()];
        for t in 0..K {
            worst = worst.max((b.topic_share[t] - sum[t] / total).abs());
        }
    }
    ensure!(worst <= 1e-9, "two-step aggregation off by {worst:e}");
    Ok(format!("10000 entries exact; two-step worst difference {worst:.2e}"))
}

fn segmentation_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let pool: Vec<String> = (0..400).map(|i| format!("tok{i}")).collect();
    let docs: Vec<TokenSeq> = (0..1000)
        .map(|_| {
            let len = rng.gen_range(0..600);
            TokenSeq((0..len).map(|_| pool[(rng.gen::<f64>().powi(2) * 400.0) as usize].clone()).collect())
        })
        .collect();
    let vocab = build_vocabulary(&docs, 2, 1.0, &HashSet::new()).unwrap();
    let mut paragraphs = 0;
    for (d, doc) in docs.iter().enumerate() {
        let target = rng.gen_range(5..=120);
        let parts = segment(&format!("d{d}"), doc, &vocab, target);
        let kept: Vec<u32> = doc.iter().filter_map(|w| vocab.id_of(w)).collect();
        let joined: Vec<u32> = parts.iter().flat_map(|p| p.token_ids.iter().copied()).collect();
        ensure!(joined == kept, "document {d}: coverage differs");
        let sizes: Vec<usize> = parts.iter().map(|p| p.token_ids.len()).collect();
        if let (Some(max), Some(min)) = (sizes.iter().max(), sizes.iter().min()) {
            ensure!(max - min <= 1, "document {d}: sizes {sizes:?}");
        }
        paragraphs += parts.len();
    }
    Ok(format!("1000 documents, {paragraphs} paragraphs"))
}

// ------------------------------------------------------------ pipeline

fn small_workspace(dir: &Path) -> PipelineConfig {
    let path = common::corpus_workspace(dir, "[lda]\nk = 5\niterations = 60\nburn_in = 20\ninfer_iterations = 30\n");
    PipelineConfig::load(&path).unwrap()
}

fn ingest_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 15, 0, 0, 0).unwrap()
}

fn append_posts(dir: &Path) {
    let mut f = std::fs::OpenOptions::new().append(true).open(dir.join("feed.jsonl")).unwrap();
    for i in 0..4 {
        let rec = serde_json::json!({
            "external_id": format!("late-{i}"),
            "body": "Railways and wind energy budget for schools and hospitals next year.",
            "author": "Sari Koski",
            "published_at": format!("2024-02-0{}T10:00:00Z", i + 1),
            "url": format!("https://social.example/sari/status/late{i}"),
        });
        writeln!(f, "{rec}").unwrap();
    }
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut checksums = Vec::new();
    let mut exports = Vec::new();
    let mut counts = Vec::new();
    // Transcript sections without a URL are identified by file path, so
    // both runs use the same directory.
    let dir = tmp.path().join("w");
    for _ in 0..2 {
        if dir.exists() {
            std::fs::remove_dir_all(&dir).unwrap();
        }
        let cfg = small_workspace(&dir);
        let log = &mut Vec::new();
        cli::ingest(&cfg, None, ingest_time(), log).unwrap();
        let opts = TrainOptions { seed: 99, k: None, backend: None };
        let report = cli::train(&cfg, &opts, ingest_time(), log).unwrap();
        let record = cli::release(&cfg, &report.model_id).unwrap();
        checksums.push((report.model_id.clone(), record.checksum.clone()));

        append_posts(&dir);
        cli::ingest(&cfg, None, ingest_time(), log).unwrap();
        let opts = InferOptions { model_id: report.model_id.clone(), seed: 3, since: None };
        let first = cli::infer(&cfg, &opts).unwrap();
        let second = cli::infer(&cfg, &opts).unwrap();
        counts.push((first, second));
        let out = dir.join("entries.jsonl");
        cli::export(&cfg, &report.model_id, &out).unwrap();
        exports.push(std::fs::read(out).unwrap());
    }
    ensure!(checksums[0].1.is_some(), "released model has no checksum");
    ensure!(checksums[0] == checksums[1], "checksums differ: {checksums:?}");
    ensure!(counts.iter().all(|&(f, s)| f == 4 && s == 0), "infer counts {counts:?}");
    ensure!(exports[0] == exports[1], "exported entries differ between runs");
    Ok(format!(
        "checksum {} reproduced; infer {} then {}",
        checksums[0].1.as_deref().unwrap_or(""),
        counts[0].0,
        counts[0].1
    ))
}

fn linear_scan(all: &[StoredEntry], f: &EntryFilter) -> Vec<StoredEntry> {
    let mut out: Vec<StoredEntry> = all
        .iter()
        .filter(|e| e.model_id == f.model_id && e.status == EntryStatus::Active)
        .filter(|e| f.persons.as_ref().map_or(true, |s| s.contains(&e.person_id)))
        .filter(|e| f.parties.as_ref().map_or(true, |s| s.contains(&e.party)))
        .filter(|e| f.platforms.as_ref().map_or(true, |s| s.contains(&e.platform)))
        .filter(|e| f.start.map_or(true, |t| e.timestamp >= t))
        .filter(|e| f.end.map_or(true, |t| e.timestamp < t))
        .cloned()
        .collect();
    out.sort_by(|a, b| (a.timestamp, &a.doc_id).cmp(&(b.timestamp, &b.doc_id)));
    out
}

fn pick<R: Rng, T: Clone + Ord>(rng: &mut R, all: &[T]) -> Option<BTreeSet<T>> {
    rng.gen_bool(0.5).then(|| all.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect())
}

fn store_integrity() -> Outcome {
    const K: usize = 5;
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let mut all = common::random_entries(&mut rng, 2000, K, "m");
    for e in &mut all {
        e.timestamp += Duration::nanoseconds(rng.gen_range(0..1_000_000_000));
    }
    let quarantined: HashSet<String> = all
        .iter()
        .filter(|e| e.status == EntryStatus::Quarantined)
        .map(|e| e.doc_id.clone())
        .collect();
    let before_restart = {
        let store = Store::open(dir.path()).unwrap();
        let art = ModelArtifacts { model: b"model".to_vec(), vocab: b"vocab".to_vec() };
        store.register_model(&common::model_record("m", K), &art).unwrap();
        store.release_model("m").unwrap();
        let mut shuffled = all.clone();
        shuffled.shuffle(&mut rng);
        for e in &shuffled {
            let doc = common::document_of(e);
            if quarantined.contains(&e.doc_id) {
                store.put_quarantined(&doc, "unknown_person").unwrap();
            } else {
                store.put_document(&doc).unwrap();
            }
        }
        store.put_entries(&shuffled).unwrap();
        let mut out = Vec::new();
        store.export_entries("m", &mut out).unwrap();
        out
    };

    let store = Store::open_read_only(dir.path()).unwrap();
    let mut after_restart = Vec::new();
    store.export_entries("m", &mut after_restart).unwrap();
    ensure!(before_restart == after_restart, "export differs across restart");
    for e in &all {
        let got = store.get_entry(&e.doc_id, "m").unwrap().ok_or("entry lost")?;
        let same_bits = got.theta.as_slice().iter().zip(e.theta.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
        ensure!(&got == e && same_bits, "entry {} changed across restart", e.doc_id);
    }

    let active_docs = store.documents(EntryStatus::Active, None).unwrap();
    ensure!(active_docs.iter().all(|d| !quarantined.contains(&d.doc_id)), "quarantined document listed as active");
    ensure!(active_docs.len() + quarantined.len() == all.len(), "document counts");
    for id in quarantined.iter().take(50) {
        ensure!(service::document(&store, id, Some("m")).is_err(), "quarantined {id} served");
    }

    let persons: Vec<String> = common::PERSONS.iter().map(|p| p.0.to_string()).collect();
    let parties: Vec<String> = common::PERSONS.iter().map(|p| p.1.to_string()).collect();
    for n in 0..200 {
        let a = common::year_start() + Duration::seconds(rng.gen_range(0..365 * 86_400));
        let b = a + Duration::seconds(rng.gen_range(1..200 * 86_400));
        let filter = EntryFilter {
            model_id: "m".into(),
            persons: pick(&mut rng, &persons),
            parties: pick(&mut rng, &parties),
            platforms: pick(&mut rng, &Platform::ALL),
            start: rng.gen_bool(0.8).then_some(a),
            end: rng.gen_bool(0.8).then_some(b),
        };
        let want = linear_scan(&all, &filter);
        let got = store.query_entries(&filter, Page::ALL).unwrap();
        ensure!(got == want, "query {n} differs from linear scan");
        ensure!(got.iter().all(|e| !quarantined.contains(&e.doc_id)), "query {n} returned quarantined");
        if let (Some(start), Some(end)) = (filter.start, filter.end) {
            let q = RollupQuery {
                model_id: "m".into(),
                persons: filter.persons.clone(),
                parties: filter.parties.clone(),
                platforms: filter.platforms.clone(),
                start,
                end,
                bucket: Bucket::Week,
                weighting: if n % 2 == 0 { Weighting::Tokens } else { Weighting::PersonEqual },
            };
            let served = service::rollup_query(&store, &q).map_err(|e| e.message)?;
            ensure!(served == rollup(&want, K, &q).unwrap(), "rollup {n} differs");
        }
    }
    Ok(format!("2000 entries ({} quarantined), 200 queries", quarantined.len()))
}

// ------------------------------------------------------------- service

async fn call(app: &Router, uri: &str) -> Option<(StatusCode, Vec<u8>)> {
    let req = Request::get(uri).body(Body::empty()).ok()?;
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    Some((status, body.to_vec()))
}

fn decode<T: serde::de::DeserializeOwned>(status: StatusCode, body: &[u8], uri: &str) -> Result<T, String> {
    if status != StatusCode::OK {
        return Err(format!("{uri}: status {status}: {}", String::from_utf8_lossy(body)));
    }
    serde_json::from_slice(body).map_err(|e| format!("{uri}: {e}"))
}

fn dir_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = hex::encode(Sha256::digest(std::fs::read(&path).unwrap()));
                out.insert(path.strip_prefix(root).unwrap().display().to_string(), digest);
            }
        }
    }
    out
}

fn encode(s: &str) -> String {
    url::form_urlencoded::byte_serialize(s.as_bytes()).collect()
}

fn service_delegation() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, model) = common::released_corpus(dir.path(), 6, 17);
    let labels = "[model.\"MODEL\"]\neconomy = [0, 2]\nclimate = [1]\n".replace("MODEL", &model);
    std::fs::write(dir.path().join("labels.toml"), labels).unwrap();
    let flags = ApiOverrides {
        default_model: Some(model.clone()),
        topic_labels: Some(dir.path().join("labels.toml")),
        ..Default::default()
    };
    let api = ApiConfig::resolve(&cfg, &flags, |_| None).map_err(|e| e.to_string())?;
    api.check()?;
    let app = service::router(api.clone());
    let store = Store::open_read_only(&cfg.store).unwrap();
    let docs = store.documents(EntryStatus::Active, None).unwrap();
    let before = dir_digest(&cfg.store);

    let rollups = [
        "from=2023-01-01&to=2024-01-01".to_string(),
        "from=2023-01-01&to=2024-01-01&bucket=week&weighting=person_equal".to_string(),
        "from=2023-03-01&to=2023-10-01&bucket=day&platforms=parliament".to_string(),
        format!("from=2023-01-01T00:00:00Z&to=2024-01-01&bucket=quarter&parties=Green,Centre&model_id={model}"),
        "from=2022-01-01&to=2025-01-01&bucket=year&persons=anna-virtanen,sari-koski".to_string(),
    ];
    let rt = tokio::runtime::Runtime::new().unwrap();
    let mut checked = 0;
    let mut fuzzed = 0;
    let outcome: Result<(), String> = rt.block_on(async {
        let (s, b) = call(&app, "/api/models").await.unwrap();
        ensure!(decode::<service::ModelsResponse>(s, &b, "models")? == service::list_models(&store).unwrap(), "models");
        let (s, b) = call(&app, "/api/topics").await.unwrap();
        let want = service::topics(&store, &api.topic_labels, &model).unwrap();
        ensure!(!want.labels.is_empty(), "labels not loaded");
        ensure!(decode::<service::TopicsResponse>(s, &b, "topics")? == want, "topics");
        checked += 2;
        for raw in &rollups {
            let uri = format!("/api/rollup?{raw}");
            let (s, b) = call(&app, &uri).await.unwrap();
            let q = service::parse_rollup_query(raw, Some(&model)).unwrap();
            ensure!(decode::<RollupResult>(s, &b, &uri)? == service::rollup_query(&store, &q).unwrap(), "{uri}");
            checked += 1;
        }
        let pairs = [
            ("from=2023-01-01&to=2023-07-01", "from=2023-07-01&to=2024-01-01"),
            ("from=2023-01-01&to=2024-01-01&platforms=social", "from=2023-01-01&to=2024-01-01&platforms=parliament"),
            ("from=2023-01-01&to=2024-01-01&bucket=quarter&parties=Green", "from=2023-01-01&to=2024-01-01&bucket=quarter&parties=Coalition,Centre&weighting=person_equal"),
        ];
        for (l, r) in pairs {
            let uri = format!("/api/compare?left={}&right={}", encode(l), encode(r));
            let (s, b) = call(&app, &uri).await.unwrap();
            let lq = service::parse_rollup_query(l, Some(&model)).unwrap();
            let rq = service::parse_rollup_query(r, Some(&model)).unwrap();
            ensure!(
                decode::<service::CompareResponse>(s, &b, &uri)? == service::compare_queries(&store, &lq, &rq).unwrap(),
                "{uri}"
            );
            checked += 1;
        }
        for d in &docs {
            let uri = format!("/api/documents/{}", d.doc_id);
            let (s, b) = call(&app, &uri).await.unwrap();
            let want = service::document(&store, &d.doc_id, Some(&model)).unwrap();
            ensure!(want.theta.is_some(), "{} has no mixture", d.doc_id);
            ensure!(decode::<service::DocumentResponse>(s, &b, &uri)? == want, "{uri}");
            checked += 1;
        }

        let mut rng = ChaCha8Rng::seed_from_u64(8080);
        let paths = [
            "/api/models".to_string(),
            "/api/topics".to_string(),
            "/api/rollup".to_string(),
            "/api/compare".to_string(),
            format!("/api/documents/{}", docs[0].doc_id),
            "/api/documents/".to_string(),
            "/api/documents/%00".to_string(),
            "/api/rollup/x".to_string(),
            "/api".to_string(),
            "/".to_string(),
        ];
        let keys = ["model_id", "from", "to", "bucket", "weighting", "persons", "parties", "platforms", "left", "right", "x", ""];
        let values = [
            "2023-01-01", "2024-01-01", "2023-06-15T12:00:00Z", "2023-13-45", "-1", "month", "week", "day",
            "fortnight", "tokens", "person_equal", "Green", "blog,social", "fax", "%FF%FE", "%00", "%E2%82%AC",
            "anna-virtanen", &model, "lda-0000000000000000", "from%3D2023-01-01%26to%3D2024-01-01", "",
            "9999-12-31", "0001-01-01",
        ];
        for _ in 0..400 {
            let mut uri = paths.choose(&mut rng).unwrap().clone();
            let n = rng.gen_range(0..6);
            for i in 0..n {
                uri.push(if i == 0 { '?' } else { '&' });
                uri.push_str(keys.choose(&mut rng).unwrap());
                if rng.gen_bool(0.9) {
                    uri.push('=');
                    uri.push_str(values.choose(&mut rng).unwrap());
                }
            }
            let Some((status, body)) = call(&app, &uri).await else { continue };
            fuzzed += 1;
            ensure!(!status.is_server_error(), "{uri}: {status}");
            if status != StatusCode::OK {
                let err: ErrorBody = serde_json::from_slice(&body).map_err(|e| format!("{uri}: {e}"))?;
                ensure!(!err.code.is_empty(), "{uri}: empty error code");
            }
        }
        Ok(())
    });
    outcome?;
    drop(store);
    ensure!(dir_digest(&cfg.store) == before, "store changed during the read session");
    Ok(format!("{checked} endpoint calls equal, {fuzzed} fuzzed requests, store unchanged"))
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    common::corpus_workspace(dir, "");
    std::fs::copy(common::fixtures().join("mustas.toml"), dir.join("mustas.toml")).unwrap();
    let bin = env!("CARGO_BIN_EXE_mustas");
    let run = |args: &[&str]| -> Result<String, String> {
        let out = Command::new(bin).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
        }
        Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
    };
    let ingested = run(&["ingest"])?;
    let model = run(&["train", "--seed", "2023"])?;
    run(&["release", "--model", &model])?;

    let store = Store::open_read_only(dir.join("store")).unwrap();
    let record = store.model(&model).unwrap().ok_or("model missing")?;
    ensure!(record.k == 20, "k = {}", record.k);
    let platforms: BTreeSet<Platform> = store
        .documents(EntryStatus::Active, None)
        .unwrap()
        .iter()
        .map(|d| d.platform)
        .collect();
    ensure!(platforms.len() == 3, "documents from {platforms:?}");
    drop(store);

    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut server = Command::new(bin)
        .current_dir(dir)
        .args(["serve", "--bind", "127.0.0.1", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| e.to_string())?;
    let result = (|| -> Result<RollupResult, String> {
        let deadline = Instant::now() + StdDuration::from_secs(30);
        while std::net::TcpStream::connect(("127.0.0.1", port)).is_err() {
            ensure!(Instant::now() < deadline, "server did not start");
            std::thread::sleep(StdDuration::from_millis(100));
        }
        let url = format!("http://127.0.0.1:{port}/api/rollup?model_id={model}&from=2023-01-01&to=2024-01-01&bucket=month");
        let resp = reqwest::blocking::get(url).map_err(|e| e.to_string())?;
        ensure!(resp.status().is_success(), "status {}", resp.status());
        let body = resp.bytes().map_err(|e| e.to_string())?;
        serde_json::from_slice::<RollupResult>(&body).map_err(|e| e.to_string())
    })();
    let _ = server.kill();
    let _ = server.wait();
    let result = result?;

    let filled: Vec<_> = result.buckets.iter().filter(|b| b.document_count > 0).collect();
    ensure!(!filled.is_empty(), "no non-empty buckets");
    for b in &filled {
        let sum: f64 = b.topic_share.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-9, "bucket {} sums to {sum}", b.start);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 300.0, "took {secs:.1}s");
    Ok(format!("{ingested}; model {model}; {} non-empty monthly buckets", filled.len()))
}
