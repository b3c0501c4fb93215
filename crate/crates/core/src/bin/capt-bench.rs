use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use capt_bench::align::WordNormalization;
use capt_bench::corpus::{self, Adapter, Corpus, IngestOptions, Split, DEFAULT_PHONE_ACC_THRESHOLD};
use capt_bench::inference::server::{self, ServerState};
use capt_bench::inference::{
    self, AudioMode, Backend, DecodeParams, EvalConfig, HttpBackend, MockBackend, MockMode, MockPolicy, RawHeader,
    RetryPolicy, INFER_PROTOCOL,
};
use capt_bench::mdd_metrics::PerReference;
use capt_bench::phoneset::PhoneInventory;
use capt_bench::prompts::{build_sft, write_sft, Task, DEFAULT_AUDIO_TOKEN};
use capt_bench::report::{
    export_scatter, render_r, render_table, score, MetricsReport, ScoreConfig, TableFormat, EXIT_FATAL, EXIT_OK,
    EXIT_PARTIAL,
};

#[derive(Parser)]
#[command(name = "capt-bench", version, about = "Pronunciation assessment and mispronunciation detection benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl OnOff {
    fn enabled(self) -> bool {
        matches!(self, OnOff::On)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Convert an upstream corpus into capt-corpus/1.
    Ingest {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value = "speechocean762")]
        adapter: Adapter,
        /// Phone inventory file; the built-in one by default.
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Skip invalid records instead of failing.
        #[arg(long)]
        lenient: bool,
        #[arg(long, default_value_t = DEFAULT_PHONE_ACC_THRESHOLD)]
        phone_acc_threshold: f64,
    },
    /// Print split statistics of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write capt-sft/1 training pairs.
    BuildSft {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "train")]
        split: Split,
        #[arg(long, value_enum, default_value = "on")]
        control_tokens: OnOff,
        #[arg(long, default_value = DEFAULT_AUDIO_TOKEN)]
        audio_token: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Query a backend for every utterance and task and write capt-raw/1.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Base URL of a capt-infer/1 server.
        #[arg(long, conflicts_with = "mock", required_unless_present = "mock")]
        backend: Option<String>,
        /// Use the built-in mock: oracle, canonical, noisy or constant.
        #[arg(long)]
        mock: Option<MockMode>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        sub_rate: f64,
        #[arg(long, value_delimiter = ',', default_value = "apa,mdd")]
        tasks: Vec<Task>,
        #[arg(long, value_enum, default_value = "on")]
        control_tokens: OnOff,
        #[arg(long, default_value_t = 8)]
        concurrency: usize,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long, default_value_t = 512)]
        max_new_tokens: u32,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        #[arg(long, default_value_t = 500)]
        backoff_ms: u64,
        #[arg(long, default_value_t = 120)]
        timeout_secs: u64,
        /// Directory audio references are relative to.
        #[arg(long)]
        audio_root: Option<PathBuf>,
        /// Send audio inline as base64 instead of by path.
        #[arg(long)]
        embed_audio: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse responses and compute all metrics into capt-report/1.
    Score {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Omit the timestamp so identical inputs give identical bytes.
        #[arg(long)]
        reproducible: bool,
        #[arg(long, default_value = "")]
        label: String,
        #[arg(long, default_value = "")]
        epoch: String,
        #[arg(long, default_value = "perceived")]
        per_reference: PerReference,
        /// Word splitting before WER: standard (lowercase, trim punctuation) or verbatim.
        #[arg(long, default_value = "standard")]
        word_norm: WordNormalization,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        /// Also write per-utterance capt-metrics/1 rows here.
        #[arg(long)]
        rows: Option<PathBuf>,
    },
    /// Render one or more reports as a results table.
    Report {
        #[arg(long = "in", value_delimiter = ',', required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "text")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export accuracy vs PER scatter data from a report.
    Correlate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the mock over capt-infer/1.
    ServeMock {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "oracle")]
        mode: MockMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        sub_rate: f64,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Answer 503 to the first N requests per utterance and task.
        #[arg(long, default_value_t = 0)]
        fail_first: usize,
    },
    /// Write the capt-infer/1 contract cases a server must satisfy.
    ContractFixtures {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn policy(mode: MockMode, seed: u64, sub_rate: f64) -> MockPolicy {
    MockPolicy {
        seed,
        substitution_rate: sub_rate,
        ..MockPolicy::new(mode)
    }
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    Corpus::load(path).with_context(|| format!("loading corpus {}", path.display()))
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Ingest {
            source,
            adapter,
            inventory,
            out,
            lenient,
            phone_acc_threshold,
        } => {
            let inv = match inventory {
                Some(p) => PhoneInventory::load(&p)?,
                None => PhoneInventory::default_inventory(),
            };
            let options = IngestOptions {
                phone_acc_threshold,
                lenient,
            };
            let outcome = corpus::ingest(&source, adapter, &inv, &options)?;
            outcome.corpus.save(&out)?;
            for e in &outcome.skipped {
                eprintln!("skipped: {e}");
            }
            let counts = outcome.corpus.split_counts();
            eprintln!(
                "wrote {} utterances ({} train, {} test) to {}",
                outcome.corpus.len(),
                counts.train,
                counts.test,
                out.display()
            );
            Ok(if outcome.skipped.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Stats { corpus, json } => {
            let s = corpus::stats(&load_corpus(&corpus)?);
            if json {
                println!("{}", serde_json::to_string_pretty(&s)?);
            } else {
                print!("{}", s.render());
            }
            Ok(EXIT_OK)
        }
        Command::BuildSft {
            corpus,
            split,
            control_tokens,
            audio_token,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let pairs = build_sft(&corpus, split, control_tokens.enabled());
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_sft(std::io::BufWriter::new(file), &pairs, split, control_tokens.enabled(), &audio_token)
                .map_err(|e| anyhow::anyhow!(e))?;
            eprintln!("wrote {} pairs to {}", pairs.len(), out.display());
            Ok(EXIT_OK)
        }
        Command::Run {
            corpus,
            split,
            backend,
            mock,
            seed,
            sub_rate,
            tasks,
            control_tokens,
            concurrency,
            temperature,
            max_new_tokens,
            retries,
            backoff_ms,
            timeout_secs,
            audio_root,
            embed_audio,
            out,
        } => {
            let corpus = load_corpus(&corpus)?;
            let backend = match (backend, mock) {
                (Some(url), None) => {
                    let mode = if embed_audio { AudioMode::Inline } else { AudioMode::Url };
                    Backend::Http(HttpBackend::new(&url, Duration::from_secs(timeout_secs))?.with_audio(mode, audio_root))
                }
                (None, Some(mode)) => Backend::Mock(MockBackend::new(
                    policy(mode, seed, sub_rate),
                    Arc::new(corpus.inventory().clone()),
                )?),
                _ => bail!("exactly one of --backend and --mock is required"),
            };
            let config = EvalConfig {
                split,
                tasks,
                control_tokens: control_tokens.enabled(),
                concurrency,
                decode: DecodeParams {
                    temperature,
                    max_new_tokens,
                },
                retry: RetryPolicy {
                    max_retries: retries,
                    initial_backoff: Duration::from_millis(backoff_ms),
                },
            };
            let responses = inference::run_eval_blocking(&corpus, &backend, &config)?;
            inference::save_raw(&out, &RawHeader::new(backend.id(), &config), &responses)?;
            let failed = responses.iter().filter(|r| r.error.is_some()).count();
            eprintln!("wrote {} responses ({failed} failed) to {}", responses.len(), out.display());
            Ok(if failed == 0 { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Score {
            corpus,
            raw,
            out,
            reproducible,
            label,
            epoch,
            per_reference,
            word_norm,
            alpha,
            rows,
        } => {
            let corpus = load_corpus(&corpus)?;
            let (header, responses) = inference::load_raw(&raw)?;
            let config = ScoreConfig {
                per_reference,
                word_normalization: word_norm,
                alpha,
                reproducible,
                strategy: label,
                epoch,
            };
            let report = score(&corpus, &header, &responses, &config);
            report.save(&out)?;
            if let Some(rows) = rows {
                let file = std::fs::File::create(&rows).with_context(|| format!("creating {}", rows.display()))?;
                report.write_metrics_rows(std::io::BufWriter::new(file))?;
            }
            for s in &report.skipped {
                eprintln!("skipped {}: {}", s.metric, s.reason);
            }
            eprintln!(
                "parsed {}/{} responses; report {} written to {}",
                report.parse.successes(),
                report.parse.apa.total + report.parse.mdd.total,
                report.run.run_id,
                out.display()
            );
            Ok(report.exit_code())
        }
        Command::Report { inputs, format, out } => {
            let reports = inputs
                .iter()
                .map(|p| MetricsReport::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let table = render_table(&reports, format)?;
            match out {
                Some(p) => write_file(&p, &table)?,
                None => print!("{table}"),
            }
            Ok(EXIT_OK)
        }
        Command::Correlate { input, out } => {
            let report = MetricsReport::load(&input)?;
            let export = export_scatter(&report, &out)?;
            if let Some(w) = &export.warning {
                eprintln!("warning: {w}");
                return Ok(EXIT_PARTIAL);
            }
            if let Some(s) = &report.correlation_study {
                println!("r(PER, human accuracy) = {}", render_r(&s.human));
                println!("r(PER, predicted accuracy) = {}", render_r(&s.predicted));
            }
            for f in &export.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(EXIT_OK)
        }
        Command::ServeMock {
            corpus,
            mode,
            seed,
            sub_rate,
            addr,
            fail_first,
        } => {
            let corpus = Arc::new(load_corpus(&corpus)?);
            let state = Arc::new(ServerState::new(corpus, policy(mode, seed, sub_rate))?.with_transient_failures(fail_first));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("{INFER_PROTOCOL} mock listening on http://{}", listener.local_addr()?);
                server::serve(listener, state).await
            })?;
            Ok(EXIT_OK)
        }
        Command::ContractFixtures { corpus, out } => {
            let corpus = Arc::new(load_corpus(&corpus)?);
            let state = ServerState::new(corpus, MockPolicy::new(MockMode::Oracle))?;
            let rt = tokio::runtime::Runtime::new()?;
            let cases = rt.block_on(server::contract_cases(&state));
            let doc = serde_json::json!({"protocol": INFER_PROTOCOL, "backend_id": state.backend().id(), "cases": cases});
            write_file(&out, &(serde_json::to_string_pretty(&doc)? + "\n"))?;
            eprintln!("wrote {} contract cases to {}", cases.len(), out.display());
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_FATAL as u8 } else { EXIT_OK as u8 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FATAL as u8)
        }
    }
}
