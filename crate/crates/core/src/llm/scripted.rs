// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::call_log::read_call_log;
use super::{BackendKind, ChatBackend, CompletionRequest, CompletionResult, LlmError, Usage};

/// One canned reply. `contains` lists substrings the final user message must
/// include for the entry to match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default)]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TranscriptEntry {
    pub fn reply(tag: impl Into<String>, response: impl Into<String>) -> Self {
        Self { tag: tag.into(), contains: Vec::new(), response: Some(response.into()), error: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub entries: Vec<TranscriptEntry>,
}

impl Transcript {
    /// Loads a transcript from JSON (`{"entries": [...]}`) or from a
    /// recorded `.jsonl` call log.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        if path.extension().is_some_and(|e| e == "jsonl") {
            return Ok(Self::from_records(&read_call_log(path)?));
        }
        if !path.is_file() {
            return Err(LlmError::MissingLog(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| LlmError::CorruptLog { line: e.line(), reason: e.to_string() })
    }
}

/// Lane of a request tag: the prefix before the first `/`. Entries are
/// consumed strictly in order within a lane, so independent cases running
/// concurrently can share one backend.
fn lane(tag: &str) -> &str {
    tag.split_once('/').map(|(l, _)| l).unwrap_or("")
}

#[derive(Debug)]
pub struct ScriptedBackend {
    lanes: Mutex<BTreeMap<String, VecDeque<TranscriptEntry>>>,
}

impl ScriptedBackend {
    pub fn new(transcript: Transcript) -> Self {
        let mut lanes: BTreeMap<String, VecDeque<TranscriptEntry>> = BTreeMap::new();
        for entry in transcript.entries {
            lanes.entry(lane(&entry.tag).to_string()).or_default().push_back(entry);
        }
        Self { lanes: Mutex::new(lanes) }
    }

    /// Entries not yet consumed.
    pub fn remaining(&self) -> usize {
        self.lanes.lock().expect("script poisoned").values().map(VecDeque::len).sum()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let mut lanes = self.lanes.lock().expect("script poisoned");
        let queue = lanes.get_mut(lane(&req.request_tag));
        let Some(next) = queue.as_ref().and_then(|q| q.front()) else {
            return Err(LlmError::ScriptExhausted(req.request_tag.clone()));
        };
        let user = req.last_user_text();
        if next.tag != req.request_tag || !next.contains.iter().all(|c| user.contains(c.as_str())) {
            return Err(LlmError::ScriptMismatch {
                expected_tag: next.tag.clone(),
                got_tag: req.request_tag.clone(),
            });
        }
        let entry = queue.and_then(VecDeque::pop_front).expect("front checked above");
        if let Some(message) = entry.error {
            return Err(LlmError::Replayed { tag: entry.tag, message });
        }
        let text = entry.response.unwrap_or_default();
        Ok(CompletionResult { usage: estimate_usage(req, &text), text, latency_ms: 0, backend: BackendKind::Scripted })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}

fn estimate_usage(req: &CompletionRequest, text: &str) -> Usage {
    let prompt_chars: usize = req.messages.iter().map(|m| m.content.len()).sum();
    Usage { prompt_tokens: (prompt_chars / 4) as u64, completion_tokens: (text.len() / 4) as u64 }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync;

/// Backend answering through a closure; used for generated test scenarios.
pub struct ResponderBackend {
    respond: Box<Responder>,
}

impl ResponderBackend {
    pub fn new<F>(respond: F) -> Self
    where
        F: Fn(&CompletionRequest) -> Result<String, LlmError> + Send + Sync + 'static,
    {
        Self { respond: Box::new(respond) }
    }
}

impl ChatBackend for ResponderBackend {
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, LlmError> {
        let text = (self.respond)(req)?;
        Ok(CompletionResult { usage: estimate_usage(req, &text), text, latency_ms: 0, backend: BackendKind::Scripted })
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }
}
