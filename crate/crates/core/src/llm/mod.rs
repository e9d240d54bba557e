//! Chat-completion backends over multimodal messages: remote HTTP, scripted
//! stub and a record/replay cache keyed by request content.

mod parsed;
mod remote;
mod replay;
mod scripted;
mod transport;

pub use parsed::{complete_parsed, correction_message, ParsedCompletion};
pub use remote::{RemoteBackend, RemoteConfig, TokenBucket, ENV_API_KEY, ENV_BASE_URL, ENV_MODEL};
pub use replay::{CacheEntry, ReplayBackend, ReplayCache, ReplayMode};
pub use scripted::{ScriptRule, ScriptedBackend};
pub use transport::{Transport, TransportError, UreqTransport};

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::hashing::{canonical_json, sha256_hex};
use crate::prompt::{Message, OutputError, Part};

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },
    #[error("scripted backend has no response left for this request")]
    QueueExhausted,
    #[error("replay cache miss for request {key}")]
    ReplayMiss { key: String },
    #[error("cannot read image {}: {message}", path.display())]
    Image { path: PathBuf, message: String },
    #[error("cache: {0}")]
    Cache(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("backend returned an empty response")]
    EmptyResponse,
    #[error("no parsable response after {} attempt(s): {last_error}", attempts.len())]
    ParseFailedAfterRetries {
        attempts: Vec<String>,
        last_error: OutputError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(messages: Vec<Message>) -> Self {
        Self {
            messages,
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_model(mut self, model: &str, temperature: f64, max_tokens: u32) -> Self {
        self.model = model.to_string();
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    /// Every text part, in order, joined by newlines.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(Message::plain_text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Content form used for hashing and cache files: images are replaced by
    /// the SHA-256 of their bytes.
    pub fn content_value(&self) -> Result<Value, LlmError> {
        let mut messages = Vec::with_capacity(self.messages.len());
        for m in &self.messages {
            let mut parts = Vec::with_capacity(m.parts.len());
            for p in &m.parts {
                parts.push(match p {
                    Part::Text { text } => json!({ "type": "text", "text": text }),
                    Part::Image { path } => {
                        let bytes = std::fs::read(path).map_err(|e| LlmError::Image {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                        json!({ "type": "image", "sha256": sha256_hex(bytes) })
                    }
                });
            }
            messages.push(json!({ "role": m.role, "parts": parts }));
        }
        Ok(json!({
            "model": self.model,
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
            "messages": messages,
        }))
    }

    pub fn request_key(&self) -> Result<String, LlmError> {
        Ok(sha256_hex(canonical_json(&self.content_value()?)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Remote,
    Scripted,
    Replay,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Remote => "remote",
            Provenance::Scripted => "scripted",
            Provenance::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default)]
    pub usage: Usage,
    pub provenance: Provenance,
}

pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: Backend + ?Sized> Backend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

impl<B: Backend + ?Sized> Backend for std::sync::Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(request)
    }
}

/// Passes calls through and remembers how many were made.
pub struct CountingBackend<B> {
    inner: B,
    calls: AtomicUsize,
    texts: Mutex<Vec<String>>,
}

impl<B: Backend> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
            texts: Mutex::new(Vec::new()),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Request texts in call order.
    pub fn request_texts(&self) -> Vec<String> {
        self.texts.lock().expect("poisoned").clone()
    }

    pub fn into_inner(self) -> B {
        self.inner
    }
}

impl<B: Backend> Backend for CountingBackend<B> {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts.lock().expect("poisoned").push(request.text());
        self.inner.complete(request)
    }
}
