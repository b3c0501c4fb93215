#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use capt_bench::corpus::{ingest, Adapter, Corpus, IngestOptions, Split};
use capt_bench::inference::{load_raw, run_eval_blocking, Backend, EvalConfig, MockBackend, MockPolicy, RawHeader, RawResponse};
use capt_bench::phoneset::PhoneInventory;
use capt_bench::report::{score, MetricsReport, ScoreConfig};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn mini_corpus() -> Corpus {
    let options = IngestOptions {
        phone_acc_threshold: 0.5,
        lenient: false,
    };
    ingest(
        &fixtures().join("mini_so762"),
        Adapter::Speechocean762,
        &PhoneInventory::default_inventory(),
        &options,
    )
    .expect("mini corpus ingests")
    .corpus
}

pub fn ground_truth() -> serde_json::Value {
    let text = std::fs::read_to_string(fixtures().join("mini_ground_truth.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Parses a decimal string from the generator's high-precision output.
pub fn num(v: &serde_json::Value) -> f64 {
    match v {
        serde_json::Value::String(s) => s.parse().unwrap(),
        other => other.as_f64().unwrap(),
    }
}

pub fn eval_config() -> EvalConfig {
    EvalConfig {
        split: Split::Test,
        concurrency: 4,
        ..EvalConfig::default()
    }
}

pub fn run_mock(corpus: &Corpus, policy: MockPolicy) -> (RawHeader, Vec<RawResponse>) {
    let backend = Backend::Mock(MockBackend::new(policy, Arc::new(corpus.inventory().clone())).unwrap());
    let config = eval_config();
    let responses = run_eval_blocking(corpus, &backend, &config).unwrap();
    (RawHeader::new(backend.id(), &config), responses)
}

pub fn reproducible() -> ScoreConfig {
    ScoreConfig {
        reproducible: true,
        ..ScoreConfig::default()
    }
}

pub fn score_mock(corpus: &Corpus, policy: MockPolicy) -> MetricsReport {
    let (header, raw) = run_mock(corpus, policy);
    score(corpus, &header, &raw, &reproducible())
}

pub fn stored_predictions() -> (RawHeader, Vec<RawResponse>) {
    load_raw(&fixtures().join("stored_predictions.ndjson")).unwrap()
}

/// Memoized top-down edit distance, written independently of the crate.
pub fn memo_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    fn go<T: PartialEq>(a: &[T], b: &[T], i: usize, j: usize, memo: &mut [Option<usize>], w: usize) -> usize {
        if let Some(v) = memo[i * w + j] {
            return v;
        }
        let v = if i == a.len() {
            b.len() - j
        } else if j == b.len() {
            a.len() - i
        } else {
            let sub = go(a, b, i + 1, j + 1, memo, w) + usize::from(a[i] != b[j]);
            let del = go(a, b, i + 1, j, memo, w) + 1;
            let ins = go(a, b, i, j + 1, memo, w) + 1;
            sub.min(del).min(ins)
        };
        memo[i * w + j] = Some(v);
        v
    }
    let w = b.len() + 1;
    let mut memo = vec![None; (a.len() + 1) * w];
    go(a, b, 0, 0, &mut memo, w)
}
