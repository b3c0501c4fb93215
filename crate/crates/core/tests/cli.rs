mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixtures;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capt-bench")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = bench(args);
    assert!(
        out.status.success(),
        "{args:?}: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ingest(dir: &Path) -> String {
    let corpus = dir.join("corpus.ndjson");
    ok(&["ingest", "--source", p(&fixtures().join("mini_so762")), "--out", p(&corpus)]);
    p(&corpus).to_owned()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = ingest(d);
    assert!(ok(&["stats", "--corpus", &corpus]).contains("speakers"));
    let stats: serde_json::Value = serde_json::from_str(&ok(&["stats", "--corpus", &corpus, "--json"])).unwrap();
    assert_eq!(stats["test"]["files"], 20);

    let raw = p(&d.join("raw.ndjson")).to_owned();
    ok(&["run", "--corpus", &corpus, "--mock", "oracle", "--concurrency", "2", "--out", &raw]);
    let report = p(&d.join("report.json")).to_owned();
    let rows = p(&d.join("rows.ndjson")).to_owned();
    ok(&[
        "score", "--corpus", &corpus, "--raw", &raw, "--out", &report, "--label", "oracle", "--epoch", "0", "--rows",
        &rows,
    ]);
    assert_eq!(std::fs::read_to_string(&rows).unwrap().lines().count(), 21);

    let md = ok(&["report", "--in", &format!("{report},{report}"), "--format", "markdown"]);
    assert_eq!(md.lines().filter(|l| l.starts_with("| oracle | 0 |")).count(), 2);
    assert!(md.contains("| 1.000 | 1.000 | 1.000 | 1.000 | 0.000 | 0.000 | 1.000 | 1.000 | 1.000 |"));
    let csv = ok(&["report", "--in", &report, "--format", "csv"]);
    assert!(csv.starts_with("Strategy,Epoch/Run,Accuracy,Fluency,Prosodic,Total,WER,PER,F1-score,Precision,Recall\n"));

    let scatter = d.join("scatter");
    let out = ok(&["correlate", "--in", &report, "--out", p(&scatter)]);
    assert!(out.contains("r(PER, human accuracy) = "));
    assert_eq!(std::fs::read_dir(&scatter).unwrap().count(), 2);

    let sft = d.join("sft.ndjson");
    ok(&["build-sft", "--corpus", &corpus, "--split", "test", "--out", p(&sft)]);
    assert_eq!(std::fs::read_to_string(&sft).unwrap().lines().count(), 41);
}

#[test]
fn reproducible_scores_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = ingest(d);
    let mut reports = Vec::new();
    for i in 0..2 {
        let raw = p(&d.join(format!("raw{i}.ndjson"))).to_owned();
        ok(&["run", "--corpus", &corpus, "--mock", "noisy", "--seed", "42", "--sub-rate", "0.1", "--out", &raw]);
        let report = d.join(format!("report{i}.json"));
        ok(&["score", "--corpus", &corpus, "--raw", &raw, "--out", p(&report), "--reproducible"]);
        reports.push(std::fs::read(&report).unwrap());
    }
    assert_eq!(
        std::fs::read(d.join("raw0.ndjson")).unwrap(),
        std::fs::read(d.join("raw1.ndjson")).unwrap()
    );
    assert_eq!(reports[0], reports[1]);
    let v: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert!(v["run"]["timestamp"].is_null());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let corpus = ingest(d);

    let missing = bench(&["stats", "--corpus", "/no/such/corpus.ndjson"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).starts_with("error:"));

    let raw = p(&d.join("apa.ndjson")).to_owned();
    ok(&["run", "--corpus", &corpus, "--mock", "oracle", "--tasks", "apa", "--out", &raw]);
    let partial = bench(&["score", "--corpus", &corpus, "--raw", &raw, "--out", p(&d.join("r.json"))]);
    assert_eq!(partial.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&partial.stderr).contains("skipped mdd"));

    let empty = bench(&["correlate", "--in", p(&d.join("r.json")), "--out", p(&d.join("sc"))]);
    assert_eq!(empty.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&empty.stderr).contains("warning"));
    assert!(!d.join("sc").exists());

    let unreachable = bench(&[
        "run", "--corpus", &corpus, "--backend", "http://127.0.0.1:9", "--out", p(&d.join("x.ndjson")),
    ]);
    assert_eq!(unreachable.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&unreachable.stderr).contains("unreachable"));

    let both = bench(&["run", "--corpus", &corpus, "--backend", "http://x", "--mock", "oracle", "--out", "x"]);
    assert_eq!(both.status.code(), Some(1));
    assert_eq!(bench(&["--help"]).status.code(), Some(0));
}

#[test]
fn contract_fixture_file() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = ingest(dir.path());
    let out = dir.path().join("contract.json");
    ok(&["contract-fixtures", "--corpus", &corpus, "--out", p(&out)]);
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["protocol"], "capt-infer/1");
    assert!(doc["cases"].as_array().unwrap().len() >= 10);
}
