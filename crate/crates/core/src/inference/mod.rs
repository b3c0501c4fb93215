//! Drives an inference backend over a corpus split.
//!
//! Requests go to an HTTP endpoint speaking `capt-infer/1` (see [`http`]) or
//! to the in-process [`mock`]. Results come back ordered by
//! (utt_id, task) regardless of completion order.

pub mod http;
pub mod mock;
pub mod server;

use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, Split, Utterance};
use crate::prompts::{build_prompt, Task};

pub use http::{AudioMode, HttpBackend};
pub use mock::{mock_respond, MockBackend, MockMode, MockPolicy};

pub const RAW_SCHEMA: &str = "capt-raw/1";
pub const INFER_PROTOCOL: &str = "capt-infer/1";

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("backend unreachable at {url}: {detail}")]
    BackendUnreachable { url: String, detail: String },
    #[error("no utterances in the {0} split")]
    EmptySplit(&'static str),
    #[error("concurrency must be at least 1")]
    ZeroConcurrency,
    #[error("invalid mock policy: {0}")]
    InvalidPolicy(String),
    #[error("malformed raw-response file at line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to start runtime: {0}")]
    Runtime(std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            temperature: 0.0,
            max_new_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceRequest {
    pub utt_id: String,
    pub task: Task,
    pub prompt: String,
    pub audio_ref: String,
    pub decode: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub utt_id: String,
    pub task: Task,
    pub text: Option<String>,
    pub latency_ms: u64,
    pub backend_id: String,
    pub error: Option<String>,
}

/// Failure of a single backend call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallError {
    pub message: String,
    pub retryable: bool,
}

impl CallError {
    pub fn fatal(message: impl Into<String>) -> Self {
        CallError {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn transient(message: impl Into<String>) -> Self {
        CallError {
            message: message.into(),
            retryable: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

pub enum Backend {
    Mock(MockBackend),
    Http(HttpBackend),
}

impl Backend {
    pub fn id(&self) -> String {
        match self {
            Backend::Mock(m) => m.id(),
            Backend::Http(h) => h.id(),
        }
    }

    async fn check(&self) -> Result<(), InferenceError> {
        match self {
            Backend::Mock(_) => Ok(()),
            Backend::Http(h) => h.health().await,
        }
    }

    async fn call(&self, req: &InferenceRequest, utt: &Utterance) -> Result<String, CallError> {
        match self {
            Backend::Mock(m) => m.call(req, utt).await,
            Backend::Http(h) => h.call(req).await,
        }
    }

    fn reports_latency(&self) -> bool {
        matches!(self, Backend::Http(_))
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub split: Split,
    pub tasks: Vec<Task>,
    pub control_tokens: bool,
    pub concurrency: usize,
    pub decode: DecodeParams,
    pub retry: RetryPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split: Split::Test,
            tasks: Task::ALL.to_vec(),
            control_tokens: true,
            concurrency: 8,
            decode: DecodeParams::default(),
            retry: RetryPolicy::default(),
        }
    }
}

async fn call_with_retry(
    backend: &Backend,
    req: &InferenceRequest,
    utt: &Utterance,
    retry: RetryPolicy,
) -> RawResponse {
    let started = Instant::now();
    let mut attempt = 0;
    let result = loop {
        match backend.call(req, utt).await {
            Ok(text) => break Ok(text),
            Err(e) if e.retryable && attempt < retry.max_retries => {
                tokio::time::sleep(retry.initial_backoff * 2u32.pow(attempt)).await;
                attempt += 1;
            }
            Err(e) => break Err(e),
        }
    };
    let latency_ms = if backend.reports_latency() {
        started.elapsed().as_millis() as u64
    } else {
        0
    };
    let (text, error) = match result {
        Ok(t) => (Some(t), None),
        Err(e) => (
            None,
            Some(if attempt > 0 {
                format!("{} (after {} retries)", e.message, attempt)
            } else {
                e.message
            }),
        ),
    };
    RawResponse {
        utt_id: req.utt_id.clone(),
        task: req.task,
        text,
        latency_ms,
        backend_id: backend.id(),
        error,
    }
}

/// One request per (utterance, task) of the configured split, at most
/// `concurrency` in flight.
pub async fn run_eval(
    corpus: &Corpus,
    backend: &Backend,
    config: &EvalConfig,
) -> Result<Vec<RawResponse>, InferenceError> {
    if config.concurrency == 0 {
        return Err(InferenceError::ZeroConcurrency);
    }
    let utts: Vec<&Utterance> = corpus.split(config.split).collect();
    if utts.is_empty() {
        return Err(InferenceError::EmptySplit(config.split.label()));
    }
    backend.check().await?;

    let mut tasks = config.tasks.clone();
    tasks.sort();
    tasks.dedup();
    let jobs: Vec<(InferenceRequest, &Utterance)> = utts
        .iter()
        .flat_map(|u| {
            tasks.iter().map(move |&task| {
                (
                    InferenceRequest {
                        utt_id: u.utt_id.clone(),
                        task,
                        prompt: build_prompt(task, config.control_tokens),
                        audio_ref: u.audio_ref.clone(),
                        decode: config.decode,
                    },
                    *u,
                )
            })
        })
        .collect();

    let mut responses: Vec<RawResponse> = stream::iter(jobs)
        .map(|(req, utt)| async move { call_with_retry(backend, &req, utt, config.retry).await })
        .buffer_unordered(config.concurrency)
        .collect()
        .await;
    responses.sort_by(|a, b| (&a.utt_id, a.task).cmp(&(&b.utt_id, b.task)));
    Ok(responses)
}

/// Blocking wrapper around [`run_eval`] on a private multi-thread runtime.
pub fn run_eval_blocking(
    corpus: &Corpus,
    backend: &Backend,
    config: &EvalConfig,
) -> Result<Vec<RawResponse>, InferenceError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(InferenceError::Runtime)?;
    rt.block_on(run_eval(corpus, backend, config))
}

/// Header line of a `capt-raw/1` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub schema: String,
    pub backend_id: String,
    pub split: Split,
    pub tasks: Vec<Task>,
    pub control_tokens: bool,
    pub decode: DecodeParams,
}

impl RawHeader {
    pub fn new(backend_id: String, config: &EvalConfig) -> Self {
        RawHeader {
            schema: RAW_SCHEMA.to_owned(),
            backend_id,
            split: config.split,
            tasks: config.tasks.clone(),
            control_tokens: config.control_tokens,
            decode: config.decode,
        }
    }
}

pub fn write_raw<W: Write>(mut out: W, header: &RawHeader, responses: &[RawResponse]) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, header)?;
    out.write_all(b"\n")?;
    for r in responses {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_raw<R: BufRead>(input: R) -> Result<(RawHeader, Vec<RawResponse>), InferenceError> {
    let mut header = None;
    let mut responses = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let fmt_err = |detail: String| InferenceError::Format { line: i + 1, detail };
        let line = line.map_err(|e| fmt_err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        if header.is_none() {
            let h: RawHeader = serde_json::from_str(&line).map_err(|e| fmt_err(format!("bad header: {e}")))?;
            if h.schema != RAW_SCHEMA {
                return Err(fmt_err(format!("expected schema {RAW_SCHEMA}, found {}", h.schema)));
            }
            header = Some(h);
        } else {
            responses.push(serde_json::from_str(&line).map_err(|e| fmt_err(e.to_string()))?);
        }
    }
    let header = header.ok_or(InferenceError::Format {
        line: 1,
        detail: "missing header".into(),
    })?;
    Ok((header, responses))
}

pub fn load_raw(path: &Path) -> Result<(RawHeader, Vec<RawResponse>), InferenceError> {
    let file = std::fs::File::open(path).map_err(|source| InferenceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_raw(std::io::BufReader::new(file))
}

pub fn save_raw(path: &Path, header: &RawHeader, responses: &[RawResponse]) -> Result<(), InferenceError> {
    let io = |source| InferenceError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = std::fs::File::create(path).map_err(io)?;
    write_raw(std::io::BufWriter::new(file), header, responses).map_err(io)
}

/// Shared handle type used by the mock server and backends.
pub(crate) type SharedCorpus = Arc<Corpus>;
