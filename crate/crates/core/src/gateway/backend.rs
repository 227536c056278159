use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::usage::estimate_tokens;
use super::Usage;
use crate::jsonl;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub user: String,
}

impl ChatRequest {
    pub fn new(model: impl Into<String>, system: Option<String>, user: impl Into<String>) -> Self {
        ChatRequest {
            model: model.into(),
            system,
            user: user.into(),
        }
    }

    /// Stable key identifying the request content.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.model.as_bytes());
        h.update([0]);
        h.update(self.system.as_deref().unwrap_or("").as_bytes());
        h.update([0]);
        h.update(self.user.as_bytes());
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatReply {
    pub text: String,
    /// `(input, output)` tokens as reported by the backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reported: Option<(u64, u64)>,
}

impl ChatReply {
    pub fn text(text: impl Into<String>) -> Self {
        ChatReply {
            text: text.into(),
            reported: None,
        }
    }

    /// Usage of this call, estimated from whitespace when not reported.
    pub fn usage(&self, req: &ChatRequest) -> Usage {
        match self.reported {
            Some((input_tokens, output_tokens)) => Usage {
                input_tokens,
                output_tokens,
                calls: 1,
                estimated: false,
            },
            None => Usage {
                input_tokens: req.system.as_deref().map(estimate_tokens).unwrap_or(0) + estimate_tokens(&req.user),
                output_tokens: estimate_tokens(&self.text),
                calls: 1,
                estimated: true,
            },
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("no recorded reply for request {key}")]
    NotRecorded { key: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl BackendError {
    /// Worth retrying after a pause.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

/// A text-generation service.
pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        (**self).complete(req)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        (**self).complete(req)
    }
}

/// Scripted backend: a closure receives each request and the 0-based number
/// of calls made before it.
pub struct FnBackend<F> {
    f: F,
    calls: AtomicUsize,
}

impl<F> FnBackend<F>
where
    F: Fn(&ChatRequest, usize) -> Result<ChatReply, BackendError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnBackend {
            f,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&ChatRequest, usize) -> Result<ChatReply, BackendError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        (self.f)(req, n)
    }
}

/// One request/reply pair as persisted by [`RecordingBackend`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub request: ChatRequest,
    pub reply: ChatReply,
}

/// Passes calls through and appends each exchange to a JSON-lines file.
pub struct RecordingBackend<B> {
    inner: B,
    out: Mutex<BufWriter<File>>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingBackend {
            inner,
            out: Mutex::new(BufWriter::new(file)),
        })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let reply = self.inner.complete(req)?;
        let entry = Transcript {
            key: req.key(),
            request: req.clone(),
            reply: reply.clone(),
        };
        let mut out = self.out.lock().unwrap();
        serde_json::to_writer(&mut *out, &entry).map_err(|e| BackendError::Io(e.into()))?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(reply)
    }
}

/// Answers from recorded transcripts. Identical requests recorded several
/// times are answered in recording order.
pub struct ReplayBackend {
    queues: Mutex<HashMap<String, VecDeque<ChatReply>>>,
    source: PathBuf,
}

impl ReplayBackend {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let entries: Vec<Transcript> = jsonl::read(path).map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(Self::from_transcripts(entries, path))
    }

    pub fn from_transcripts(entries: Vec<Transcript>, source: impl Into<PathBuf>) -> Self {
        let mut queues: HashMap<String, VecDeque<ChatReply>> = HashMap::new();
        for e in entries {
            queues.entry(e.key).or_default().push_back(e.reply);
        }
        ReplayBackend {
            queues: Mutex::new(queues),
            source: source.into(),
        }
    }

    pub fn source(&self) -> &Path {
        &self.source
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        let key = req.key();
        self.queues
            .lock()
            .unwrap()
            .get_mut(&key)
            .and_then(VecDeque::pop_front)
            .ok_or(BackendError::NotRecorded { key })
    }
}

/// Chat-completion client speaking the common `/chat/completions` JSON shape.
/// The key is read from an environment variable at construction.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: String,
    temperature: Option<f64>,
    limiter: Option<RateLimiter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    /// Upper bound on requests started per minute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<u32>,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
            temperature: None,
            requests_per_minute: None,
        }
    }
}

impl HttpBackend {
    pub fn new(config: &HttpConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::Config(format!("environment variable {} is not set", config.api_key_env)))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint: format!("{}/chat/completions", config.base_url.trim_end_matches('/')),
            api_key,
            temperature: config.temperature,
            limiter: config.requests_per_minute.map(RateLimiter::per_minute),
        })
    }
}

#[derive(Deserialize)]
struct WireReply {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl Backend for HttpBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatReply, BackendError> {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut messages = Vec::new();
        if let Some(system) = &req.system {
            messages.push(serde_json::json!({"role": "system", "content": system}));
        }
        messages.push(serde_json::json!({"role": "user", "content": req.user}));
        let mut body = serde_json::json!({"model": req.model, "messages": messages});
        if let Some(t) = self.temperature {
            body["temperature"] = t.into();
        }
        let resp = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Status {
                status: status.as_u16(),
                body: text,
            });
        }
        let wire: WireReply = serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        let content = wire
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices".into()))?;
        Ok(ChatReply {
            text: content,
            reported: wire.usage.map(|u| (u.prompt_tokens, u.completion_tokens)),
        })
    }
}

/// Spaces out request starts to stay under a rate.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_minute(n: u32) -> Self {
        Self::with_interval(Duration::from_secs(60) / n.max(1))
    }

    pub fn with_interval(interval: Duration) -> Self {
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    /// Block until the caller may start a request.
    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}
