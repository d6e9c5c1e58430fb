// SPDX-License-Identifier: Apache-2.0

use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendKind, ChatBackend, CompletionRequest, CompletionResult, LlmError, Usage};

pub const API_KEY_ENV: &str = "SPECLOOP_API_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct LiveSettings {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self {
            base_url: "https://openrouter.ai/api/v1".into(),
            timeout: Duration::from_secs(300),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// OpenAI-compatible chat-completions client.
#[derive(Debug)]
pub struct LiveBackend {
    settings: LiveSettings,
    api_key: String,
    client: reqwest::blocking::Client,
}

enum Failure {
    Transient(String),
    Fatal(LlmError),
}

impl LiveBackend {
    /// Reads the API key from `SPECLOOP_API_KEY`.
    pub fn from_env(settings: LiveSettings) -> Result<Self, LlmError> {
        match std::env::var(API_KEY_ENV) {
            Ok(key) if !key.trim().is_empty() => Self::new(settings, key),
            _ => Err(LlmError::AuthMissing(API_KEY_ENV.into())),
        }
    }

    pub fn new(settings: LiveSettings, api_key: String) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(settings.timeout)
            .build()
            .map_err(|e| LlmError::InvalidRequest(format!("HTTP client: {e}")))?;
        Ok(Self { settings, api_key, client })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, req: &CompletionRequest) -> Result<(String, Usage), Failure> {
        let body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let resp = self
            .client
            .post(self.endpoint())
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Failure::Transient(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Transient(e.to_string()))?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {}: {}", status.as_u16(), text)));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(LlmError::Http { status: status.as_u16(), body: text }));
        }
        parse_response(&text).map_err(Failure::Fatal)
    }
}

fn parse_response(text: &str) -> Result<(String, Usage), LlmError> {
    let value: Value = serde_json::from_str(text).map_err(|e| LlmError::InvalidResponse(e.to_string()))?;
    let content = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| LlmError::InvalidResponse("missing choices[0].message.content".into()))?;
    let usage = Usage {
        prompt_tokens: value.pointer("/usage/prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: value.pointer("/usage/completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    };
    Ok((content.to_string(), usage))
}

impl ChatBackend for LiveBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let start = Instant::now();
        let attempts = self.settings.max_retries + 1;
        let mut last_error = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.settings.backoff_base * 2u32.saturating_pow(attempt - 1);
                log::warn!("{}: retrying after {last_error} (attempt {})", req.request_tag, attempt + 1);
                std::thread::sleep(delay);
            }
            match self.attempt(req) {
                Ok((text, usage)) => {
                    return Ok(CompletionResult {
                        text,
                        usage,
                        latency_ms: start.elapsed().as_millis() as u64,
                        backend: BackendKind::Live,
                    })
                }
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(e)) => last_error = e,
            }
        }
        Err(LlmError::TransportExhausted { attempts, last_error })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Live
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ChatMessage;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `responses` in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let counter = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok((mut stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                counter.fetch_add(1, Ordering::SeqCst);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(reply.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), hits)
    }

    fn settings(base: String) -> LiveSettings {
        LiveSettings { base_url: base, timeout: Duration::from_secs(5), max_retries: 3, backoff_base: Duration::from_millis(1) }
    }

    fn req() -> CompletionRequest {
        CompletionRequest::new("m", vec![ChatMessage::user("hi")], "t")
    }

    const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"hello"}}],"usage":{"prompt_tokens":7,"completion_tokens":2}}"#;

    #[test]
    fn missing_key_is_auth_error() {
        if std::env::var(API_KEY_ENV).is_ok() {
            return;
        }
        assert!(matches!(LiveBackend::from_env(LiveSettings::default()), Err(LlmError::AuthMissing(_))));
    }

    #[test]
    fn parses_success() {
        let (base, _) = serve(vec![(200, OK.into())]);
        let backend = LiveBackend::new(settings(base), "k".into()).unwrap();
        let r = backend.complete(&req()).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(r.usage, Usage { prompt_tokens: 7, completion_tokens: 2 });
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let (base, hits) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, OK.into())]);
        let backend = LiveBackend::new(settings(base), "k".into()).unwrap();
        assert_eq!(backend.complete(&req()).unwrap().text, "hello");
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausts_after_configured_retries() {
        let (base, hits) = serve(vec![(500, "{}".into()); 4]);
        let backend = LiveBackend::new(settings(base), "k".into()).unwrap();
        assert!(matches!(backend.complete(&req()), Err(LlmError::TransportExhausted { attempts: 4, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (base, hits) = serve(vec![(401, "{\"error\":\"bad key\"}".into())]);
        let backend = LiveBackend::new(settings(base), "k".into()).unwrap();
        assert!(matches!(backend.complete(&req()), Err(LlmError::Http { status: 401, .. })));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_body_is_invalid_response() {
        assert!(matches!(parse_response("{}"), Err(LlmError::InvalidResponse(_))));
    }
}
