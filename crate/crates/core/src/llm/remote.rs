//! OpenAI-compatible chat-completions client.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};

use super::{Backend, ChatRequest, ChatResponse, LlmError, Provenance, Transport, Usage};
use crate::prompt::Part;

pub const ENV_API_KEY: &str = "FINAGENT_API_KEY";
pub const ENV_BASE_URL: &str = "FINAGENT_BASE_URL";
pub const ENV_MODEL: &str = "FINAGENT_MODEL";
const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub max_retries: usize,
    pub backoff: Duration,
    pub requests_per_minute: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            max_retries: 3,
            backoff: Duration::from_millis(500),
            requests_per_minute: 60.0,
        }
    }
}

impl RemoteConfig {
    /// Endpoint and key from `FINAGENT_BASE_URL` and `FINAGENT_API_KEY`
    /// (falling back to `OPENAI_API_KEY`).
    pub fn from_env() -> Self {
        let api_key = std::env::var(ENV_API_KEY)
            .or_else(|_| std::env::var("OPENAI_API_KEY"))
            .ok()
            .filter(|k| !k.is_empty());
        Self {
            base_url: std::env::var(ENV_BASE_URL).unwrap_or_else(|_| DEFAULT_BASE_URL.to_string()),
            api_key,
            ..Self::default()
        }
    }
}

/// Blocking token bucket holding at most one minute's worth of requests.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(rpm: f64) -> Self {
        let capacity = rpm.max(1.0);
        Self {
            capacity,
            per_second: rpm / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes a token if one is available, else returns the wait until one is.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut s = self.state.lock().expect("poisoned");
        let now = Instant::now();
        s.0 = (s.0 + now.duration_since(s.1).as_secs_f64() * self.per_second).min(self.capacity);
        s.1 = now;
        if s.0 >= 1.0 {
            s.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - s.0) / self.per_second))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            std::thread::sleep(wait);
        }
    }
}

pub struct RemoteBackend {
    transport: Box<dyn Transport>,
    config: RemoteConfig,
    limiter: TokenBucket,
}

fn mime_for(path: &std::path::Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("jpg") | Some("jpeg") => "image/jpeg",
        Some("svg") => "image/svg+xml",
        Some("webp") => "image/webp",
        _ => "image/png",
    }
}

impl RemoteBackend {
    pub fn new(transport: Box<dyn Transport>, config: RemoteConfig) -> Self {
        let limiter = TokenBucket::per_minute(config.requests_per_minute);
        Self {
            transport,
            config,
            limiter,
        }
    }

    /// Wire body with images inlined as base64 data URLs.
    pub fn wire_body(request: &ChatRequest) -> Result<Value, LlmError> {
        let mut messages = Vec::new();
        for m in &request.messages {
            let mut content = Vec::new();
            for p in &m.parts {
                match p {
                    Part::Text { text } => content.push(json!({ "type": "text", "text": text })),
                    Part::Image { path } => {
                        let bytes = std::fs::read(path).map_err(|e| LlmError::Image {
                            path: path.clone(),
                            message: e.to_string(),
                        })?;
                        let url = format!(
                            "data:{};base64,{}",
                            mime_for(path),
                            base64::engine::general_purpose::STANDARD.encode(bytes)
                        );
                        content.push(json!({ "type": "image_url", "image_url": { "url": url } }));
                    }
                }
            }
            messages.push(json!({ "role": m.role, "content": content }));
        }
        Ok(json!({
            "model": request.model,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
            "messages": messages,
        }))
    }

    fn parse_reply(v: &Value) -> Result<ChatResponse, LlmError> {
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        if text.trim().is_empty() {
            return Err(LlmError::EmptyResponse);
        }
        let count = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
        Ok(ChatResponse {
            text,
            usage: Usage {
                prompt_tokens: count("/usage/prompt_tokens"),
                completion_tokens: count("/usage/completion_tokens"),
            },
            provenance: Provenance::Remote,
        })
    }
}

impl Backend for RemoteBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = Self::wire_body(request)?;
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff * (1 << (attempt - 1).min(6)) as u32);
            }
            self.limiter.acquire();
            match self
                .transport
                .post_json(&url, self.config.api_key.as_deref(), &body)
            {
                Ok(v) => return Self::parse_reply(&v),
                Err(e) if e.is_retryable() => {
                    log::warn!("chat request attempt {} failed: {e}", attempt + 1);
                    last = e.to_string();
                }
                Err(e) => {
                    return Err(LlmError::Transport {
                        attempts: attempt + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last,
        })
    }
}
