//! A `capt-infer/1` server backed by the mock, plus the contract fixtures
//! any real server must reproduce.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::http::{WireRequest, WireResponse};
use super::{InferenceError, MockBackend, MockPolicy, SharedCorpus};
use crate::corpus::Corpus;
use crate::prompts::{build_prompt, Task};

pub struct ServerState {
    corpus: SharedCorpus,
    backend: MockBackend,
    fail_first: usize,
    failures: Mutex<HashMap<(String, Task), usize>>,
}

impl ServerState {
    pub fn new(corpus: Arc<Corpus>, policy: MockPolicy) -> Result<Self, InferenceError> {
        let inventory = Arc::new(corpus.inventory().clone());
        Ok(ServerState {
            corpus,
            backend: MockBackend::new(policy, inventory)?,
            fail_first: 0,
            failures: Mutex::new(HashMap::new()),
        })
    }

    /// Answer 503 to the first `n` requests for each (utt_id, task).
    pub fn with_transient_failures(mut self, n: usize) -> Self {
        self.fail_first = n;
        self
    }

    pub fn with_delay(mut self, delay: std::time::Duration) -> Self {
        self.backend = self.backend.with_delay(delay);
        self
    }

    pub fn backend(&self) -> &MockBackend {
        &self.backend
    }

    fn reject(status: StatusCode, msg: impl Into<String>) -> (StatusCode, WireResponse) {
        (
            status,
            WireResponse {
                text: None,
                error: Some(msg.into()),
            },
        )
    }

    /// Everything up to producing text, without side effects.
    fn validate(&self, body: &[u8]) -> Result<WireRequest, (StatusCode, WireResponse)> {
        let req: WireRequest = serde_json::from_slice(body)
            .map_err(|e| Self::reject(StatusCode::UNPROCESSABLE_ENTITY, format!("malformed request body: {e}")))?;
        if req.prompt.trim().is_empty() {
            return Err(Self::reject(StatusCode::UNPROCESSABLE_ENTITY, "prompt is empty"));
        }
        if !req.prompt.ends_with(req.task.prompt_text()) {
            return Err(Self::reject(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("prompt does not match task {}", req.task),
            ));
        }
        if req.audio_b64.is_none() == req.audio_url.is_none() {
            return Err(Self::reject(
                StatusCode::UNPROCESSABLE_ENTITY,
                "exactly one of audio_b64 and audio_url is required",
            ));
        }
        if self.corpus.get(&req.utt_id).is_none() {
            return Err(Self::reject(StatusCode::NOT_FOUND, format!("unknown utt_id {}", req.utt_id)));
        }
        Ok(req)
    }

    pub async fn evaluate(&self, body: &[u8]) -> (StatusCode, WireResponse) {
        let req = match self.validate(body) {
            Ok(r) => r,
            Err(e) => return e,
        };
        if self.fail_first > 0 {
            let mut seen = self.failures.lock().expect("failure table poisoned");
            let n = seen.entry((req.utt_id.clone(), req.task)).or_insert(0);
            if *n < self.fail_first {
                *n += 1;
                return Self::reject(StatusCode::SERVICE_UNAVAILABLE, "transient failure");
            }
        }
        let utt = self.corpus.get(&req.utt_id).expect("validated above");
        let text = self.backend.respond(utt, req.task).await;
        (
            StatusCode::OK,
            WireResponse {
                text: Some(text),
                error: None,
            },
        )
    }
}

async fn evaluate(State(state): State<Arc<ServerState>>, body: Bytes) -> (StatusCode, Json<WireResponse>) {
    let (status, resp) = state.evaluate(&body).await;
    (status, Json(resp))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({"status": "ok"}))
}

pub fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/v1/evaluate", post(evaluate))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<ServerState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

/// Binds `addr` and serves on a background task of the current runtime.
pub async fn spawn(addr: SocketAddr, state: Arc<ServerState>) -> std::io::Result<SocketAddr> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(serve(listener, state));
    Ok(local)
}

/// One request/response pair of the protocol contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractCase {
    pub name: String,
    pub method: String,
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body: Option<String>,
    pub status: u16,
    /// Exact expected body, or null when only the shape is fixed
    /// (`text` present for 200, `error` present otherwise).
    pub response: Option<serde_json::Value>,
}

/// Contract cases evaluated against the mock server. Success cases carry
/// the mock's exact text; a real model only has to match the shape.
pub async fn contract_cases(state: &ServerState) -> Vec<ContractCase> {
    let mut cases = vec![ContractCase {
        name: "healthz".into(),
        method: "GET".into(),
        path: "/healthz".into(),
        body: None,
        status: 200,
        response: Some(serde_json::json!({"status": "ok"})),
    }];
    let Some(utt) = state.corpus.utterances().first() else {
        return cases;
    };
    let request = |task: Task, edit: &dyn Fn(&mut serde_json::Value)| {
        let mut v = serde_json::to_value(WireRequest {
            utt_id: utt.utt_id.clone(),
            task,
            prompt: build_prompt(task, true),
            audio_b64: None,
            audio_url: Some(utt.audio_ref.clone()),
            temperature: 0.0,
            max_new_tokens: 512,
        })
        .expect("wire request serializes");
        edit(&mut v);
        v.to_string()
    };
    let mut bodies: Vec<(String, String, bool)> = Vec::new();
    for task in Task::ALL {
        let lower = task.label().to_ascii_lowercase();
        bodies.push((format!("{lower}-ok"), request(task, &|_| {}), true));
        bodies.push((
            format!("{lower}-no-control-token"),
            request(task, &|v| v["prompt"] = task.prompt_text().into()),
            true,
        ));
    }
    bodies.push((
        "missing-prompt".into(),
        request(Task::Apa, &|v| {
            v.as_object_mut().unwrap().remove("prompt");
        }),
        false,
    ));
    bodies.push((
        "empty-prompt".into(),
        request(Task::Apa, &|v| v["prompt"] = "".into()),
        false,
    ));
    bodies.push((
        "prompt-task-mismatch".into(),
        request(Task::Apa, &|v| v["prompt"] = build_prompt(Task::Mdd, true).into()),
        false,
    ));
    bodies.push((
        "unknown-task".into(),
        request(Task::Apa, &|v| v["task"] = "ASR".into()),
        false,
    ));
    bodies.push((
        "no-audio".into(),
        request(Task::Mdd, &|v| {
            v.as_object_mut().unwrap().remove("audio_url");
        }),
        false,
    ));
    bodies.push((
        "both-audio-fields".into(),
        request(Task::Mdd, &|v| v["audio_b64"] = "UklGRg==".into()),
        false,
    ));
    bodies.push((
        "unknown-utterance".into(),
        request(Task::Apa, &|v| v["utt_id"] = "no-such-utterance".into()),
        false,
    ));
    bodies.push(("not-json".into(), "{\"utt_id\": ".into(), false));

    for (name, body, exact) in bodies {
        let (status, resp) = state.evaluate(body.as_bytes()).await;
        cases.push(ContractCase {
            name,
            method: "POST".into(),
            path: "/v1/evaluate".into(),
            body: Some(body),
            status: status.as_u16(),
            response: exact.then(|| serde_json::to_value(&resp).expect("response serializes")),
        });
    }
    cases
}
