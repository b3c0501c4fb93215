//! Scoring a run and rendering the results.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::align::{align, EditCounts, ErrorRate, WordNormalization};
use crate::corpus::Corpus;
use crate::inference::{RawHeader, RawResponse};
use crate::mdd_metrics::{corpus_mdd, MddCounts, PerReference, UtteranceMdd};
use crate::parsing::{parse_all, ApaScores, ParseOutcome, ParseSummary};
use crate::prompts::Task;
use crate::stats::{
    accuracy_per_correlation, apa_pcc_table, scatter_rows, ApaPcc, CorrelationResult, CorrelationStudy, Dimension,
};

pub const REPORT_SCHEMA: &str = "capt-report/1";
pub const METRICS_SCHEMA: &str = "capt-metrics/1";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FATAL: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

pub const TABLE_COLUMNS: [&str; 11] = [
    "Strategy",
    "Epoch/Run",
    "Accuracy",
    "Fluency",
    "Prosodic",
    "Total",
    "WER",
    "PER",
    "F1-score",
    "Precision",
    "Recall",
];

pub const HUMAN_SCATTER_FILE: &str = "human_accuracy_vs_per.csv";
pub const PREDICTED_SCATTER_FILE: &str = "predicted_accuracy_vs_per.csv";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a {REPORT_SCHEMA} report: {detail}")]
    Format { path: String, detail: String },
    #[error("no reports to render")]
    NoReports,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub per_reference: PerReference,
    #[serde(default)]
    pub word_normalization: WordNormalization,
    /// PCC values with p at or above this are marked non-significant.
    pub alpha: f64,
    /// Omit the timestamp and derive the run id from inputs only.
    pub reproducible: bool,
    pub strategy: String,
    pub epoch: String,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig {
            per_reference: PerReference::Perceived,
            word_normalization: WordNormalization::Standard,
            alpha: 0.05,
            reproducible: false,
            strategy: String::new(),
            epoch: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    pub backend_id: String,
    pub control_tokens: bool,
    pub training_strategy_label: String,
    pub epoch: String,
    pub timestamp: Option<String>,
    pub config_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerSummary {
    pub rate: ErrorRate,
    pub counts: EditCounts,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MddSummary {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: MddCounts,
    pub degenerate: bool,
    pub per: ErrorRate,
    pub per_counts: EditCounts,
    pub per_reference: PerReference,
    pub insertions: u64,
    pub diagnosis_correct: u64,
    pub diagnosis_accuracy: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedMetric {
    pub metric: String,
    pub reason: String,
}

/// One `capt-metrics/1` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMetrics {
    pub utt_id: String,
    pub apa: Option<ApaScores>,
    pub words: Option<EditCounts>,
    pub mdd: Option<UtteranceMdd>,
    pub failed_tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema: String,
    pub run: RunMetadata,
    pub config: ScoreConfig,
    pub parse: ParseSummary,
    /// Responses whose utt_id is not in the corpus.
    pub unmatched_responses: usize,
    pub apa: Option<ApaPcc>,
    pub wer: Option<WerSummary>,
    pub mdd: Option<MddSummary>,
    pub correlation_study: Option<CorrelationStudy>,
    pub skipped: Vec<SkippedMetric>,
    pub utterances: Vec<UtteranceMetrics>,
}

impl MetricsReport {
    pub fn exit_code(&self) -> i32 {
        if self.skipped.is_empty() {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<(), ReportError> {
        std::fs::write(path, self.to_json()).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let format = |detail: String| ReportError::Format {
            path: path.display().to_string(),
            detail,
        };
        let report: MetricsReport = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
        if report.schema != REPORT_SCHEMA {
            return Err(format(format!("schema is {}", report.schema)));
        }
        Ok(report)
    }

    pub fn write_metrics_rows<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer(
            &mut out,
            &serde_json::json!({"schema": METRICS_SCHEMA, "run_id": self.run.run_id, "rows": self.utterances.len()}),
        )?;
        out.write_all(b"\n")?;
        for row in &self.utterances {
            serde_json::to_writer(&mut out, row)?;
            out.write_all(b"\n")?;
        }
        out.flush()
    }
}

fn digest(corpus: &Corpus, header: &RawHeader, raw: &[RawResponse], config: &ScoreConfig) -> String {
    let mut h = Sha256::new();
    let mut config = config.clone();
    config.reproducible = false;
    h.update(serde_json::to_vec(&config).expect("config serializes"));
    h.update(corpus.to_ndjson_string());
    h.update(serde_json::to_vec(header).expect("header serializes"));
    h.update(serde_json::to_vec(raw).expect("responses serialize"));
    format!("{:x}", h.finalize())
}

fn wer_rows(
    corpus: &Corpus,
    outcomes: &[ParseOutcome],
    norm: WordNormalization,
) -> Vec<(String, EditCounts)> {
    outcomes
        .iter()
        .filter_map(|o| {
            let m = o.mdd()?;
            let utt = corpus.get(&o.utt_id)?;
            let reference = norm.apply(&utt.word_text);
            let hypothesis = norm.apply(&m.word_transcript);
            Some((o.utt_id.clone(), align(&reference, &hypothesis).counts))
        })
        .collect()
}

/// Parses `raw` and computes every metric. Metrics that cannot be computed
/// are listed in `skipped`.
pub fn score(corpus: &Corpus, header: &RawHeader, raw: &[RawResponse], config: &ScoreConfig) -> MetricsReport {
    let config_digest = digest(corpus, header, raw, config);
    let (timestamp, run_id) = if config.reproducible {
        (None, format!("run-{}", &config_digest[..12]))
    } else {
        let now = std::time::SystemTime::now();
        let secs = now.duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        (
            Some(humantime::format_rfc3339_seconds(now).to_string()),
            format!("run-{}-{secs}", &config_digest[..12]),
        )
    };

    let matched: Vec<RawResponse> = raw.iter().filter(|r| corpus.get(&r.utt_id).is_some()).cloned().collect();
    let unmatched_responses = raw.len() - matched.len();
    let (outcomes, parse) = parse_all(&matched, corpus.inventory());
    let mut skipped = Vec::new();
    let mut skip = |metric: &str, reason: String| {
        skipped.push(SkippedMetric {
            metric: metric.to_owned(),
            reason,
        })
    };

    let words = wer_rows(corpus, &outcomes, config.word_normalization);
    let wer_counts: EditCounts = words.iter().map(|(_, c)| *c).sum();
    let wer = match wer_counts.error_rate() {
        Ok(rate) => Some(WerSummary {
            rate,
            counts: wer_counts,
            n: words.len(),
        }),
        Err(e) => {
            skip("wer", e.to_string());
            None
        }
    };

    let corpus_mdd = match corpus_mdd(corpus, &outcomes, config.per_reference) {
        Ok(m) => Some(m),
        Err(e) => {
            skip("mdd", e.to_string());
            None
        }
    };
    let apa = match apa_pcc_table(corpus, &outcomes) {
        Ok(a) => Some(a),
        Err(e) => {
            skip("apa_pcc", e.to_string());
            None
        }
    };
    let correlation_study = match &corpus_mdd {
        Some(m) => match accuracy_per_correlation(scatter_rows(corpus, &outcomes, m)) {
            Ok(s) => Some(s),
            Err(e) => {
                skip("correlation_study", e.to_string());
                None
            }
        },
        None => {
            skip("correlation_study", "no MDD results".into());
            None
        }
    };

    let mut ids: Vec<&str> = matched.iter().map(|r| r.utt_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    let utterances = ids
        .into_iter()
        .map(|id| {
            let mine: Vec<&ParseOutcome> = outcomes.iter().filter(|o| o.utt_id == id).collect();
            let mut failed_tasks: Vec<Task> = mine.iter().filter(|o| o.is_failure()).map(|o| o.task).collect();
            failed_tasks.sort();
            UtteranceMetrics {
                utt_id: id.to_owned(),
                apa: mine.iter().find_map(|o| o.apa()).copied(),
                words: words.iter().find(|(u, _)| u == id).map(|(_, c)| *c),
                mdd: corpus_mdd
                    .as_ref()
                    .and_then(|m| m.utterances.iter().find(|u| u.utt_id == id).cloned()),
                failed_tasks,
            }
        })
        .collect();

    let mdd = corpus_mdd.map(|m| MddSummary {
        precision: m.scores.precision,
        recall: m.scores.recall,
        f1: m.scores.f1,
        counts: m.scores.counts,
        degenerate: m.scores.degenerate,
        per: m.per,
        per_counts: m.per_counts,
        per_reference: m.per_reference,
        insertions: m.insertions,
        diagnosis_correct: m.diagnosis_correct,
        diagnosis_accuracy: m.diagnosis_accuracy,
        n: m.n,
    });

    MetricsReport {
        schema: REPORT_SCHEMA.to_owned(),
        run: RunMetadata {
            run_id,
            backend_id: header.backend_id.clone(),
            control_tokens: header.control_tokens,
            training_strategy_label: config.strategy.clone(),
            epoch: config.epoch.clone(),
            timestamp,
            config_digest,
        },
        config: config.clone(),
        parse,
        unmatched_responses,
        apa,
        wer,
        mdd,
        correlation_study,
        skipped,
        utterances,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(format!("unknown format {other:?} (expected text, csv or markdown)")),
        }
    }
}

const MISSING: &str = "n/a";

fn num(v: f64) -> String {
    format!("{v:.3}")
}

fn pcc_cell(c: &CorrelationResult, alpha: f64, format: TableFormat) -> String {
    let Some(r) = c.r else {
        return MISSING.to_owned();
    };
    let v = num(r);
    match (c.significant(alpha), format) {
        (Some(false), TableFormat::Markdown) => format!("<u>{v}</u>"),
        (Some(false), _) => format!("{v}*"),
        _ => v,
    }
}

/// The 11 table cells of one report, in [`TABLE_COLUMNS`] order.
pub fn table_row(report: &MetricsReport, format: TableFormat) -> Vec<String> {
    let label = |s: &str| if s.is_empty() { MISSING.to_owned() } else { s.to_owned() };
    let mut row = vec![label(&report.run.training_strategy_label), label(&report.run.epoch)];
    for d in Dimension::ALL {
        row.push(match &report.apa {
            Some(a) => pcc_cell(a.get(d), report.config.alpha, format),
            None => MISSING.to_owned(),
        });
    }
    row.push(report.wer.as_ref().map_or(MISSING.to_owned(), |w| num(w.rate.value())));
    match &report.mdd {
        Some(m) => {
            row.push(num(m.per.value()));
            row.push(num(m.f1));
            row.push(num(m.precision));
            row.push(num(m.recall));
        }
        None => row.extend(std::iter::repeat_n(MISSING.to_owned(), 4)),
    }
    row
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub fn render_table(reports: &[MetricsReport], format: TableFormat) -> Result<String, ReportError> {
    if reports.is_empty() {
        return Err(ReportError::NoReports);
    }
    let rows: Vec<Vec<String>> = reports.iter().map(|r| table_row(r, format)).collect();
    let header: Vec<String> = TABLE_COLUMNS.iter().map(|s| s.to_string()).collect();
    let alpha = reports[0].config.alpha;
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            for row in std::iter::once(&header).chain(&rows) {
                let cells: Vec<String> = row.iter().map(|c| csv_field(c)).collect();
                writeln!(out, "{}", cells.join(",")).unwrap();
            }
        }
        TableFormat::Markdown => {
            writeln!(out, "| {} |", header.join(" | ")).unwrap();
            writeln!(out, "|{}|", vec!["---"; header.len()].join("|")).unwrap();
            for row in &rows {
                writeln!(out, "| {} |", row.join(" | ")).unwrap();
            }
            writeln!(out, "\nPCC values are underlined where p >= {alpha}.").unwrap();
        }
        TableFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|i| std::iter::once(&header).chain(&rows).map(|r| r[i].len()).max().unwrap_or(0))
                .collect();
            for row in std::iter::once(&header).chain(&rows) {
                let cells: Vec<String> = row
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
                    .collect();
                writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
            }
            writeln!(out, "\n* p >= {alpha}").unwrap();
        }
    }
    Ok(out)
}

/// Renders r to 4 decimals, or `n/a`.
pub fn render_r(c: &CorrelationResult) -> String {
    c.r.map_or(MISSING.to_owned(), |r| format!("{r:.4}"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScatterExport {
    pub files: Vec<PathBuf>,
    pub warning: Option<String>,
}

/// Writes the human and predicted accuracy vs PER scatter files into `dir`.
pub fn export_scatter(report: &MetricsReport, dir: &Path) -> Result<ScatterExport, ReportError> {
    let study = match &report.correlation_study {
        Some(s) if !s.rows.is_empty() => s,
        _ => {
            return Ok(ScatterExport {
                files: Vec::new(),
                warning: Some(format!("run {} has no correlation study; no scatter files written", report.run.run_id)),
            })
        }
    };
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = Vec::new();
    for (name, column, result, pick) in [
        (HUMAN_SCATTER_FILE, "human_accuracy", &study.human, true),
        (PREDICTED_SCATTER_FILE, "predicted_accuracy", &study.predicted, false),
    ] {
        let path = dir.join(name);
        let mut body = String::new();
        writeln!(body, "# r={} n={}", render_r(result), result.n).unwrap();
        writeln!(body, "utt_id,per,{column}").unwrap();
        for row in &study.rows {
            let acc = if pick { row.human_accuracy } else { row.predicted_accuracy };
            writeln!(body, "{},{},{acc}", row.utt_id, row.per).unwrap();
        }
        std::fs::write(&path, body).map_err(io(&path))?;
        files.push(path);
    }
    Ok(ScatterExport { files, warning: None })
}
