//! Chat-completion backends: a remote OpenAI-compatible HTTP client and a
//! deterministic scripted backend for offline runs and tests.

use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatRole {
    System,
    User,
    Assistant,
}

impl ChatRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ChatRole::System => "system",
            ChatRole::User => "user",
            ChatRole::Assistant => "assistant",
        }
    }
}

/// Decoding parameters. Defaults follow the simulation settings used to
/// build the reward dataset: temperature 1.1, top_p 1.0, top_k 80.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub top_k: u32,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams {
            temperature: 1.1,
            top_p: 1.0,
            top_k: 80,
            max_tokens: 1024,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<(ChatRole, String)>,
    pub sampling: SamplingParams,
    pub n_samples: usize,
}

impl ChatRequest {
    pub fn new(system_prompt: impl Into<String>, messages: Vec<(ChatRole, String)>) -> Self {
        ChatRequest {
            system_prompt: system_prompt.into(),
            messages,
            sampling: SamplingParams::default(),
            n_samples: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("scripted backend exhausted after {0} replies")]
    ScriptExhausted(usize),
    #[error("malformed backend response: {0}")]
    Malformed(String),
}

/// A chat-completion provider shared across concurrent rollouts.
pub trait ChatBackend: Send + Sync {
    /// Returns exactly `req.n_samples` completion texts.
    fn chat_complete(&self, req: &ChatRequest) -> Result<Vec<String>, BackendError>;

    /// Short identifier for manifests and logs.
    fn describe(&self) -> String;
}

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Replays a fixed list of canned replies in order. Fully deterministic
/// given the script and the call sequence; intended for one sequential
/// consumer per instance.
pub struct ScriptedBackend {
    script_len: usize,
    replies: Mutex<VecDeque<String>>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(script: impl IntoIterator<Item = S>) -> Self {
        let replies: VecDeque<String> = script.into_iter().map(Into::into).collect();
        ScriptedBackend {
            script_len: replies.len(),
            replies: Mutex::new(replies),
        }
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn chat_complete(&self, req: &ChatRequest) -> Result<Vec<String>, BackendError> {
        let mut replies = self.replies.lock().unwrap();
        if replies.len() < req.n_samples {
            return Err(BackendError::ScriptExhausted(self.script_len));
        }
        Ok((0..req.n_samples)
            .map(|_| replies.pop_front().unwrap())
            .collect())
    }

    fn describe(&self) -> String {
        format!("scripted({} replies)", self.script_len)
    }
}

/// Scripted backend that answers from a pure function of the call index
/// and request; safe for concurrent use (determinism then depends only on
/// which calls are made, not their interleaving order, when the rule
/// ignores the index).
pub struct RuleBackend<F>(pub F);

impl<F> ChatBackend for RuleBackend<F>
where
    F: Fn(&ChatRequest) -> String + Send + Sync,
{
    fn chat_complete(&self, req: &ChatRequest) -> Result<Vec<String>, BackendError> {
        Ok((0..req.n_samples).map(|_| (self.0)(req)).collect())
    }

    fn describe(&self) -> String {
        "rule".to_string()
    }
}

// ---------------------------------------------------------------------------
// Remote backend
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Base URL; the client posts to `{base}/v1/chat/completions`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token, if any.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    /// Some servers reject unknown fields; top_k is only sent when true.
    #[serde(default)]
    pub send_top_k: bool,
    /// When false, n_samples > 1 is realized as repeated single calls.
    #[serde(default)]
    pub supports_n: bool,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_in_flight() -> usize {
    8
}

struct Gate {
    count: Mutex<usize>,
    cv: Condvar,
    cap: usize,
}

impl Gate {
    fn acquire(&self) {
        let mut n = self.count.lock().unwrap();
        while *n >= self.cap {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
    }

    fn release(&self) {
        *self.count.lock().unwrap() -= 1;
        self.cv.notify_one();
    }
}

/// Blocking client for an OpenAI-compatible chat-completions endpoint.
/// Transient failures (transport errors, 429, 5xx) are retried with
/// exponential backoff up to `max_retries`.
pub struct RemoteBackend {
    cfg: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let cap = cfg.max_in_flight.max(1);
        RemoteBackend {
            cfg,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .expect("reqwest client"),
            gate: Gate {
                count: Mutex::new(0),
                cv: Condvar::new(),
                cap,
            },
        }
    }

    fn body(&self, req: &ChatRequest, n: usize) -> serde_json::Value {
        let mut messages = vec![json!({"role": "system", "content": req.system_prompt})];
        for (role, text) in &req.messages {
            messages.push(json!({"role": role.as_str(), "content": text}));
        }
        let mut body = json!({
            "model": self.cfg.model,
            "messages": messages,
            "temperature": req.sampling.temperature,
            "top_p": req.sampling.top_p,
            "max_tokens": req.sampling.max_tokens,
        });
        if n > 1 {
            body["n"] = json!(n);
        }
        if self.cfg.send_top_k {
            body["top_k"] = json!(req.sampling.top_k);
        } else {
            log::debug!("top_k={} not sent (send_top_k=false)", req.sampling.top_k);
        }
        if let Some(seed) = req.sampling.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn call_once(&self, req: &ChatRequest, n: usize) -> Result<Vec<String>, BackendError> {
        let url = format!(
            "{}/v1/chat/completions",
            self.cfg.base_url.trim_end_matches('/')
        );
        let mut last_err = String::new();
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.cfg.backoff_ms << (attempt - 1).min(8),
                ));
            }
            let mut builder = self.client.post(&url).json(&self.body(req, n));
            if let Some(var) = &self.cfg.token_env {
                if let Ok(token) = std::env::var(var) {
                    builder = builder.bearer_auth(token);
                }
            }
            match builder.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let value: serde_json::Value = resp
                            .json()
                            .map_err(|e| BackendError::Malformed(e.to_string()))?;
                        return extract_choices(&value, n);
                    }
                    last_err = format!("HTTP {status}");
                    if !(status.is_server_error() || status.as_u16() == 429) {
                        break;
                    }
                }
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(BackendError::Unavailable(format!(
            "{url}: {last_err} (after {} retries)",
            self.cfg.max_retries
        )))
    }
}

fn extract_choices(value: &serde_json::Value, n: usize) -> Result<Vec<String>, BackendError> {
    let choices = value["choices"]
        .as_array()
        .ok_or_else(|| BackendError::Malformed("no choices array".into()))?;
    let texts: Vec<String> = choices
        .iter()
        .filter_map(|c| c["message"]["content"].as_str().map(str::to_string))
        .collect();
    if texts.len() < n {
        return Err(BackendError::Malformed(format!(
            "expected {n} choices, got {}",
            texts.len()
        )));
    }
    Ok(texts.into_iter().take(n).collect())
}

impl ChatBackend for RemoteBackend {
    fn chat_complete(&self, req: &ChatRequest) -> Result<Vec<String>, BackendError> {
        self.gate.acquire();
        let result = (|| {
            if req.n_samples == 1 || self.cfg.supports_n {
                self.call_once(req, req.n_samples)
            } else {
                let mut out = Vec::with_capacity(req.n_samples);
                for _ in 0..req.n_samples {
                    out.extend(self.call_once(req, 1)?);
                }
                Ok(out)
            }
        })();
        self.gate.release();
        result
    }

    fn describe(&self) -> String {
        format!("remote({} @ {})", self.cfg.model, self.cfg.base_url)
    }
}
