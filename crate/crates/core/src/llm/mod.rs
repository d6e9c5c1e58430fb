// SPDX-License-Identifier: Apache-2.0

//! Chat-completion gateway with a live HTTP backend and scripted backends
//! for deterministic replay.

mod call_log;
mod live;
mod scripted;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::{PromptBundle, PromptPurpose};

pub use call_log::{parse_call_log, read_call_log, record_transcript, CallLog, CallRecord, CALL_LOG_FILE};
pub use live::{LiveBackend, LiveSettings, API_KEY_ENV};
pub use scripted::{ResponderBackend, ScriptedBackend, Transcript, TranscriptEntry};

pub const DEFAULT_TEMPERATURE: f64 = 0.4;
pub const DEFAULT_MAX_TOKENS: u32 = 8192;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("API key environment variable `{0}` is not set")]
    AuthMissing(String),
    #[error("transport failed after {attempts} attempts: {last_error}")]
    TransportExhausted { attempts: u32, last_error: String },
    #[error("script mismatch: expected `{expected_tag}`, got `{got_tag}`")]
    ScriptMismatch { expected_tag: String, got_tag: String },
    #[error("script exhausted before request `{0}`")]
    ScriptExhausted(String),
    #[error("recorded failure replayed for `{tag}`: {message}")]
    Replayed { tag: String, message: String },
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("corrupt call log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("call log {0} not found")]
    MissingLog(String),
    #[error("call log I/O: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub request_tag: String,
    /// Prompt kind of the final user message, used by the audit.
    pub purpose: Option<PromptPurpose>,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, tag: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            request_tag: tag.into(),
            purpose: None,
        }
    }

    /// Single-turn request from a prompt bundle.
    pub fn from_bundle(model_id: impl Into<String>, bundle: &PromptBundle, tag: impl Into<String>) -> Self {
        let mut req = Self::new(
            model_id,
            vec![
                ChatMessage::system(bundle.system_text.clone()),
                ChatMessage::user(bundle.user_text.clone()),
            ],
            tag,
        );
        req.purpose = Some(bundle.purpose);
        req
    }

    pub fn with_sampling(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("messages are empty".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn last_user_text(&self) -> &str {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Usage,
    pub latency_ms: u64,
    pub backend: BackendKind,
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError>;
    fn kind(&self) -> BackendKind;
}

/// Token bucket limiting request bursts. A rate of zero disables limiting.
#[derive(Debug)]
struct TokenBucket {
    rate_per_s: f64,
    capacity: f64,
    tokens: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(rate_per_s: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        Self { rate_per_s, capacity, tokens: capacity, last: Instant::now() }
    }

    /// Takes one token, returning how long the caller must wait first.
    fn take(&mut self) -> Duration {
        if self.rate_per_s <= 0.0 {
            return Duration::ZERO;
        }
        let now = Instant::now();
        let elapsed = now.duration_since(self.last).as_secs_f64();
        self.last = now;
        self.tokens = (self.tokens + elapsed * self.rate_per_s).min(self.capacity);
        self.tokens -= 1.0;
        if self.tokens >= 0.0 {
            Duration::ZERO
        } else {
            Duration::from_secs_f64(-self.tokens / self.rate_per_s)
        }
    }
}

/// Shared entry point for all model calls. Every call is appended to the
/// caller's [`CallLog`], whether it succeeds or fails.
pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    limiter: Mutex<TokenBucket>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        Self::with_rate_limit(backend, 0.0, 1)
    }

    pub fn with_rate_limit(backend: Arc<dyn ChatBackend>, rate_per_s: f64, burst: u32) -> Self {
        Self { backend, limiter: Mutex::new(TokenBucket::new(rate_per_s, burst)) }
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.backend.kind()
    }

    pub fn complete(&self, req: &CompletionRequest, log: &CallLog) -> Result<CompletionResult, LlmError> {
        let wait = self.limiter.lock().expect("rate limiter poisoned").take();
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
        let started = chrono::Utc::now();
        let clock = Instant::now();
        let outcome = req.validate().and_then(|()| self.backend.complete(req));
        let elapsed = clock.elapsed().as_millis() as u64;
        log.append(req, &outcome, started, elapsed, self.backend.kind())?;
        outcome
    }
}
