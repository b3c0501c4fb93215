//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

mod common;

use std::collections::{HashMap, VecDeque};
use std::panic::catch_unwind;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use capt_bench::align::{align, distance, EditCounts, EditKind};
use capt_bench::inference::{write_raw, MockMode, MockPolicy};
use capt_bench::mdd_metrics::{mdd_scores, MddCounts};
use capt_bench::parsing::{parse_apa_with_repairs, parse_mdd_with_repairs};
use capt_bench::prompts::{build_sft, parse_chat, render_chat, Task, DEFAULT_AUDIO_TOKEN};
use capt_bench::report::{export_scatter, render_table, score, TableFormat, TABLE_COLUMNS};
use capt_bench::stats::{pcc, student_t_two_sided};
use common::{fixtures, ground_truth, memo_distance, mini_corpus, num, reproducible, run_mock, score_mock, stored_predictions};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// Every string over {0,1,2} of length at most 5.
fn small_strings() -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..5 {
        frontier = frontier
            .iter()
            .flat_map(|s: &Vec<u8>| (0..3u8).map(move |c| [s.as_slice(), &[c]].concat()))
            .collect();
        out.extend(frontier.iter().cloned());
    }
    out
}

/// Breadth-first search over single edits, from each string to all others.
fn bfs_distances(strings: &[Vec<u8>]) -> Vec<Vec<u8>> {
    let index: HashMap<&[u8], usize> = strings.iter().enumerate().map(|(i, s)| (s.as_slice(), i)).collect();
    let neighbours: Vec<Vec<usize>> = strings
        .iter()
        .map(|s| {
            let mut n = Vec::new();
            for i in 0..s.len() {
                let mut del = s.clone();
                del.remove(i);
                n.push(del);
                for c in 0..3u8 {
                    if c != s[i] {
                        let mut sub = s.clone();
                        sub[i] = c;
                        n.push(sub);
                    }
                }
            }
            if s.len() < 5 {
                for i in 0..=s.len() {
                    for c in 0..3u8 {
                        let mut ins = s.clone();
                        ins.insert(i, c);
                        n.push(ins);
                    }
                }
            }
            n.iter().map(|t| index[t.as_slice()]).collect()
        })
        .collect();
    (0..strings.len())
        .map(|src| {
            let mut dist = vec![u8::MAX; strings.len()];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for &v in &neighbours[u] {
                    if dist[v] == u8::MAX {
                        dist[v] = dist[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
            dist
        })
        .collect()
}

/// Replays the alignment's ops on `a` and checks they produce `b`.
fn replay(a: &[u8], b: &[u8]) -> Result<EditCounts, String> {
    let al = align(a, b);
    let mut out = Vec::new();
    for op in &al.ops {
        match op.kind {
            EditKind::Match => {
                ensure!(a[op.ref_index.unwrap()] == b[op.hyp_index.unwrap()], "bad match in {a:?}/{b:?}");
                out.push(a[op.ref_index.unwrap()]);
            }
            EditKind::Substitute => {
                ensure!(a[op.ref_index.unwrap()] != b[op.hyp_index.unwrap()], "bad substitution in {a:?}/{b:?}");
                out.push(b[op.hyp_index.unwrap()]);
            }
            EditKind::Insert => out.push(b[op.hyp_index.unwrap()]),
            EditKind::Delete => {}
        }
    }
    ensure!(out == b, "ops of {a:?} -> {b:?} produce {out:?}");
    Ok(al.counts)
}

fn alignment_oracle() -> Result<String, String> {
    let strings = small_strings();
    let dist = bfs_distances(&strings);
    let mut pairs = 0;
    for (i, a) in strings.iter().enumerate() {
        for (j, b) in strings.iter().enumerate() {
            let counts = replay(a, b)?;
            let want = u64::from(dist[i][j]);
            ensure!(counts.errors() == want, "{a:?} -> {b:?}: align {} vs brute force {want}", counts.errors());
            ensure!(distance(a, b) as u64 == want, "{a:?} -> {b:?}: distance() disagrees");
            pairs += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2025);
    for _ in 0..10_000 {
        let alphabet = rng.random_range(2..=6u8);
        let a: Vec<u8> = (0..rng.random_range(0..=40)).map(|_| rng.random_range(0..alphabet)).collect();
        let b: Vec<u8> = (0..rng.random_range(0..=40)).map(|_| rng.random_range(0..alphabet)).collect();
        let counts = replay(&a, &b)?;
        let want = memo_distance(&a, &b) as u64;
        ensure!(counts.errors() == want, "{a:?} -> {b:?}: align {} vs memoized {want}", counts.errors());
    }
    Ok(format!("{pairs} exhaustive pairs, 10000 random pairs"))
}

fn metric_formulas() -> Result<String, String> {
    let counts = EditCounts {
        insertions: 1,
        deletions: 2,
        substitutions: 3,
        matches: 5,
        reference_len: 10,
    };
    let rate = counts.error_rate().map_err(|e| e.to_string())?;
    ensure!(rate.ratio() == num_rational::Ratio::new(3, 5), "error rate {:?}", rate.ratio());
    ensure!(counts.hypothesis_len() == 9, "hypothesis length");

    let s = mdd_scores(MddCounts { tp: 3, fp: 1, fn_: 2, tn: 0 });
    ensure!(s.precision == 0.75 && s.recall == 0.6, "p={} r={}", s.precision, s.recall);
    ensure!((s.f1 - 2.0 / 3.0).abs() < 1e-12, "f1={}", s.f1);
    let z = mdd_scores(MddCounts::default());
    ensure!(z.degenerate && z.f1 == 0.0, "zero counts");

    let r = pcc(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 5.0, 4.0]).unwrap().r.unwrap();
    ensure!((r - 3.5 / (5.0f64 * 4.75).sqrt()).abs() < 1e-12, "small pcc {r}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(3..60);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let a = rng.random_range(0.01..100.0);
        let b = rng.random_range(-1000.0..1000.0);
        let moved: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let r0 = pcc(&x, &y).unwrap().r.unwrap();
        let r1 = pcc(&moved, &y).unwrap().r.unwrap();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        let r2 = pcc(&neg, &y).unwrap().r.unwrap();
        worst = worst.max((r0 - r1).abs()).max((r0 + r2).abs());
    }
    ensure!(worst < 1e-12, "affine invariance off by {worst:e}");
    Ok(format!("worst affine deviation {worst:.1e}"))
}

fn oracle_identity() -> Result<String, String> {
    let report = score_mock(&mini_corpus(), MockPolicy::new(MockMode::Oracle));
    let wer = report.wer.as_ref().ok_or("WER skipped")?;
    let mdd = report.mdd.as_ref().ok_or("MDD skipped")?;
    let apa = report.apa.as_ref().ok_or("APA skipped")?;
    ensure!(wer.rate.errors == 0, "WER {}", wer.rate.value());
    ensure!(mdd.per.errors == 0, "PER {}", mdd.per.value());
    ensure!(mdd.f1 == 1.0 && mdd.counts.tp > 0, "F1 {} with {} TP", mdd.f1, mdd.counts.tp);
    for c in [apa.accuracy, apa.fluency, apa.prosodic, apa.total] {
        ensure!(c.r == Some(1.0), "PCC {:?}", c.r);
    }
    Ok(format!("n={} utterances, {} true mispronunciations", mdd.n, mdd.counts.tp))
}

fn canonical_consistency() -> Result<String, String> {
    let corpus = mini_corpus();
    let report = score_mock(&corpus, MockPolicy::new(MockMode::Canonical));
    let mdd = report.mdd.as_ref().ok_or("MDD skipped")?;
    ensure!(mdd.recall == 0.0, "recall {}", mdd.recall);
    let (mut errors, mut len) = (0u64, 0u64);
    for u in corpus.utterances() {
        errors += memo_distance(u.perceived_phones.phones(), u.canonical_phones.phones()) as u64;
        len += u.perceived_phones.len() as u64;
    }
    ensure!(
        (mdd.per.errors, mdd.per.reference_len) == (errors, len),
        "PER {}/{} vs oracle {errors}/{len}",
        mdd.per.errors,
        mdd.per.reference_len
    );
    let truth = &ground_truth()["canonical_mock_per"];
    ensure!(
        errors == truth["errors"].as_u64().unwrap() && len == truth["reference_len"].as_u64().unwrap(),
        "oracle disagrees with fixture ground truth"
    );
    ensure!(report.wer.as_ref().map(|w| w.rate.errors) == Some(0), "WER nonzero");
    Ok(format!("PER = {errors}/{len}, recall = 0"))
}

fn seeded_noise() -> Result<String, String> {
    let corpus = mini_corpus();
    let run = || {
        let (header, raw) = run_mock(&corpus, MockPolicy::noisy(42, 0.1));
        let mut bytes = Vec::new();
        write_raw(&mut bytes, &header, &raw).unwrap();
        (bytes, score(&corpus, &header, &raw, &reproducible()).to_json())
    };
    let (raw_a, report_a) = run();
    let (raw_b, report_b) = run();
    ensure!(raw_a == raw_b, "raw responses differ between runs");
    ensure!(report_a == report_b, "reports differ between runs");
    let report: capt_bench::report::MetricsReport = serde_json::from_str(&report_a).unwrap();
    let mdd = report.mdd.ok_or("MDD skipped")?;
    ensure!((mdd.per.errors, mdd.per.reference_len) == (26, 295), "PER {:?}", mdd.per);
    ensure!(
        mdd.counts == MddCounts { tp: 36, fp: 25, fn_: 0, tn: 239 },
        "counts {:?}",
        mdd.counts
    );
    ensure!((mdd.f1 - 72.0 / 97.0).abs() < 1e-15, "F1 {}", mdd.f1);
    Ok(format!("PER 26/295, F1 72/97, {} report bytes identical", report_a.len()))
}

fn sft_builder() -> Result<String, String> {
    let corpus = mini_corpus();
    let inv = corpus.inventory();
    for on in [true, false] {
        let pairs = build_sft(&corpus, capt_bench::corpus::Split::Test, on);
        ensure!(pairs.len() == 2 * corpus.len(), "{} pairs", pairs.len());
        for u in corpus.utterances() {
            let tasks: Vec<Task> = pairs.iter().filter(|p| p.utt_id == u.utt_id).map(|p| p.task).collect();
            ensure!(tasks == Task::ALL, "{} has tasks {tasks:?}", u.utt_id);
        }
        for p in &pairs {
            let u = corpus.get(&p.utt_id).unwrap();
            match p.task {
                Task::Apa => {
                    let (s, r) = parse_apa_with_repairs(&p.assistant_text).map_err(|e| e.to_string())?;
                    ensure!(r.is_empty(), "{} APA repairs {r:?}", p.utt_id);
                    ensure!(
                        (s.accuracy, s.fluency, s.prosodic, s.total)
                            == (u.scores.accuracy, u.scores.fluency, u.scores.prosodic, u.scores.total),
                        "{} APA values",
                        p.utt_id
                    );
                }
                Task::Mdd => {
                    let (m, r) = parse_mdd_with_repairs(&p.assistant_text, inv).map_err(|e| e.to_string())?;
                    ensure!(r.is_empty(), "{} MDD repairs {r:?}", p.utt_id);
                    ensure!(m.phoneme_transcript == u.perceived_phones, "{} phones", p.utt_id);
                    ensure!(m.word_transcript == u.word_text, "{} words", p.utt_id);
                }
            }
            let token = p.task.control_token().render();
            ensure!(p.user_text.starts_with(token) == on, "{} token presence", p.utt_id);
            ensure!(
                on || !(p.user_text.contains("<|APA|>") || p.user_text.contains("<|MDD|>")),
                "{} has a control token",
                p.utt_id
            );
            let chat = render_chat(p, DEFAULT_AUDIO_TOKEN).map_err(|e| e.to_string())?;
            ensure!(parse_chat(&chat, DEFAULT_AUDIO_TOKEN).as_ref() == Ok(p), "{} chat round trip", p.utt_id);
        }
    }
    Ok(format!("{} pairs per setting", 2 * corpus.len()))
}

fn statistics_oracle() -> Result<String, String> {
    let text = std::fs::read_to_string(fixtures().join("stats_oracle.json")).unwrap();
    let oracle: serde_json::Value = serde_json::from_str(&text).unwrap();
    let (mut dr, mut dp) = (0.0f64, 0.0f64);
    let series = oracle["series"].as_array().unwrap();
    for s in series {
        let x: Vec<f64> = s["x"].as_array().unwrap().iter().map(num).collect();
        let y: Vec<f64> = s["y"].as_array().unwrap().iter().map(num).collect();
        let c = pcc(&x, &y).map_err(|e| e.to_string())?;
        dr = dr.max((c.r.ok_or("degenerate series")? - num(&s["r"])).abs());
        dp = dp.max((c.p_value.ok_or("no p-value")? - num(&s["p"])).abs());
    }
    ensure!(dr < 1e-10, "max |dr| = {dr:e}");
    ensure!(dp < 1e-6, "max |dp| = {dp:e}");
    let grid = oracle["t_tail"].as_array().unwrap();
    let mut dt = 0.0f64;
    for g in grid {
        let p = student_t_two_sided(num(&g["t"]), num(&g["df"]));
        dt = dt.max((p - num(&g["p"])).abs());
    }
    ensure!(dt < 1e-6, "t tail max |dp| = {dt:e}");
    Ok(format!(
        "{} series: max |dr| {dr:.1e}, max |dp| {dp:.1e}; {} t points: max {dt:.1e}",
        series.len(),
        grid.len()
    ))
}

fn table_and_scatter() -> Result<String, String> {
    let corpus = mini_corpus();
    let (header, raw) = stored_predictions();
    let mut config = reproducible();
    config.strategy = "stored".into();
    config.epoch = "3".into();
    let report = score(&corpus, &header, &raw, &config);
    let truth = ground_truth();
    let pcc_truth = &truth["stored_predictions_pcc"];
    for fmt in [TableFormat::Text, TableFormat::Csv, TableFormat::Markdown] {
        let table = render_table(std::slice::from_ref(&report), fmt).map_err(|e| e.to_string())?;
        let lines: Vec<&str> = table.lines().collect();
        let (head, row): (Vec<String>, Vec<String>) = match fmt {
            TableFormat::Csv => (
                lines[0].split(',').map(str::to_owned).collect(),
                lines[1].split(',').map(str::to_owned).collect(),
            ),
            TableFormat::Markdown => {
                let cells = |l: &str| l.trim_matches('|').split('|').map(|c| c.trim().to_owned()).collect();
                (cells(lines[0]), cells(lines[2]))
            }
            TableFormat::Text => (
                lines[0].split_whitespace().map(str::to_owned).collect(),
                lines[1].split_whitespace().map(str::to_owned).collect(),
            ),
        };
        ensure!(head == TABLE_COLUMNS, "{fmt:?} header {head:?}");
        ensure!(row.len() == 11, "{fmt:?} row has {} cells", row.len());
        for (i, key) in ["accuracy", "fluency", "prosodic", "total"].iter().enumerate() {
            let r = format!("{:.3}", num(&pcc_truth[key]["r"]));
            let marked = num(&pcc_truth[key]["p"]) >= 0.05;
            let want = match (marked, fmt) {
                (true, TableFormat::Markdown) => format!("<u>{r}</u>"),
                (true, _) => format!("{r}*"),
                (false, _) => r,
            };
            ensure!(row[2 + i] == want, "{fmt:?} {key}: {} vs {want}", row[2 + i]);
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let canonical = score_mock(&corpus, MockPolicy::new(MockMode::Canonical));
    let export = export_scatter(&canonical, dir.path()).map_err(|e| e.to_string())?;
    ensure!(export.files.len() == 2 && export.warning.is_none(), "files {:?}", export.files);
    let want_r = format!("{:.4}", num(&truth["canonical_mock_correlation"]["r"]));
    for f in &export.files {
        let body = std::fs::read_to_string(f).unwrap();
        let first = body.lines().next().unwrap();
        ensure!(first.starts_with(&format!("# r={want_r} ")), "{}: {first}", f.display());
        ensure!(body.lines().count() == 2 + corpus.len(), "{}: row count", f.display());
    }
    let stored_dir = dir.path().join("stored");
    let stored = export_scatter(&report, &stored_dir).map_err(|e| e.to_string())?;
    let rows = std::fs::read_to_string(&stored.files[0]).unwrap().lines().count() - 2;
    ensure!(rows == 19, "stored scatter has {rows} rows");
    Ok(format!("11 columns in 3 formats, fluency marked, scatter r={want_r}"))
}

fn main() {
    let criteria: [(&str, Duration, Check); 8] = [
        ("alignment oracle equivalence", Duration::from_secs(30), alignment_oracle),
        ("metric formula checks", Duration::from_secs(5), metric_formulas),
        ("end-to-end oracle identity", Duration::from_secs(10), oracle_identity),
        ("canonical-mock consistency", Duration::from_secs(10), canonical_consistency),
        ("seeded-noise regression", Duration::from_secs(10), seeded_noise),
        ("SFT builder", Duration::from_secs(5), sft_builder),
        ("statistics oracle", Duration::from_secs(30), statistics_oracle),
        ("results table and scatter shape", Duration::from_secs(10), table_and_scatter),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let result = result.and_then(|detail| {
            if took > budget {
                Err(format!("took {took:.2?}, budget {budget:?}"))
            } else {
                Ok(detail)
            }
        });
        match result {
            Ok(detail) => println!("PASS  {name}  ({detail}; {took:.2?})"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}  ({why}; {took:.2?})");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
