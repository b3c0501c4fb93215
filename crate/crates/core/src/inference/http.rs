//! Client side of the `capt-infer/1` protocol.
//!
//! `POST {base}/v1/evaluate` with a JSON [`WireRequest`] answers
//! `{"text": ...}` on success or `{"error": ...}` with a 4xx/5xx status.
//! `GET {base}/healthz` answers 200 when the model is loaded.
//! 429 and 5xx are retried; other 4xx are recorded as failures.

use std::path::PathBuf;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{CallError, InferenceError, InferenceRequest};
use crate::prompts::Task;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireRequest {
    pub utt_id: String,
    pub task: Task,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_url: Option<String>,
    pub temperature: f64,
    pub max_new_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct WireResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// How audio travels to the server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AudioMode {
    /// Send the audio path (joined to the root) and let the server read it.
    Url,
    /// Read the file locally and send it inline, base64-encoded.
    Inline,
}

pub struct HttpBackend {
    base_url: String,
    client: reqwest::Client,
    audio_mode: AudioMode,
    audio_root: Option<PathBuf>,
}

impl HttpBackend {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, InferenceError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| InferenceError::BackendUnreachable {
                url: base_url.to_owned(),
                detail: e.to_string(),
            })?;
        Ok(HttpBackend {
            base_url: base_url.trim_end_matches('/').to_owned(),
            client,
            audio_mode: AudioMode::Url,
            audio_root: None,
        })
    }

    pub fn with_audio(mut self, mode: AudioMode, root: Option<PathBuf>) -> Self {
        self.audio_mode = mode;
        self.audio_root = root;
        self
    }

    pub fn id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub(crate) async fn health(&self) -> Result<(), InferenceError> {
        let url = format!("{}/healthz", self.base_url);
        let unreachable = |detail: String| InferenceError::BackendUnreachable {
            url: url.clone(),
            detail,
        };
        let resp = self.client.get(&url).send().await.map_err(|e| unreachable(e.to_string()))?;
        if !resp.status().is_success() {
            return Err(unreachable(format!("health check returned {}", resp.status())));
        }
        Ok(())
    }

    fn audio_path(&self, audio_ref: &str) -> PathBuf {
        match &self.audio_root {
            Some(root) => root.join(audio_ref),
            None => PathBuf::from(audio_ref),
        }
    }

    pub fn wire_request(&self, req: &InferenceRequest) -> Result<WireRequest, CallError> {
        let path = self.audio_path(&req.audio_ref);
        let (audio_b64, audio_url) = match self.audio_mode {
            AudioMode::Url => (None, Some(path.display().to_string())),
            AudioMode::Inline => {
                let bytes = std::fs::read(&path)
                    .map_err(|e| CallError::fatal(format!("cannot read audio {}: {e}", path.display())))?;
                (Some(base64::engine::general_purpose::STANDARD.encode(bytes)), None)
            }
        };
        Ok(WireRequest {
            utt_id: req.utt_id.clone(),
            task: req.task,
            prompt: req.prompt.clone(),
            audio_b64,
            audio_url,
            temperature: req.decode.temperature,
            max_new_tokens: req.decode.max_new_tokens,
        })
    }

    pub(crate) async fn call(&self, req: &InferenceRequest) -> Result<String, CallError> {
        let body = self.wire_request(req)?;
        let resp = self
            .client
            .post(format!("{}/v1/evaluate", self.base_url))
            .json(&body)
            .send()
            .await
            .map_err(|e| CallError::transient(format!("request failed: {e}")))?;
        let status = resp.status();
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| CallError::transient(format!("reading response body: {e}")))?;
        let parsed: WireResponse = serde_json::from_slice(&bytes).unwrap_or_default();
        if status.is_success() {
            return parsed
                .text
                .ok_or_else(|| CallError::fatal(format!("{status} response without a text field")));
        }
        let message = match parsed.error {
            Some(e) => format!("{status}: {e}"),
            None => format!("{status}: {}", String::from_utf8_lossy(&bytes)),
        };
        if status.as_u16() == 429 || status.is_server_error() {
            Err(CallError::transient(message))
        } else {
            Err(CallError::fatal(message))
        }
    }
}
