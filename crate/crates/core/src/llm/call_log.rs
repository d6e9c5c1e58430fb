// SPDX-License-Identifier: Apache-2.0

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use super::{
    BackendKind, ChatMessage, CompletionRequest, CompletionResult, LlmError, Transcript, TranscriptEntry, Usage,
};
use crate::prompting::PromptPurpose;

pub const CALL_LOG_FILE: &str = "llm_calls.jsonl";

/// One line of `llm_calls.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallRecord {
    pub seq: u64,
    pub tag: String,
    pub purpose: Option<PromptPurpose>,
    pub model_id: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub messages: Vec<ChatMessage>,
    pub response: Option<String>,
    pub error: Option<String>,
    pub usage: Usage,
    pub backend: BackendKind,
    pub started_at: String,
    pub finished_at: String,
    pub latency_ms: u64,
}

#[derive(Debug, Default)]
struct Inner {
    file: Option<File>,
    records: Vec<CallRecord>,
}

/// Append-only call log kept in memory and optionally mirrored to a JSONL
/// file. Each record is flushed as it is written.
#[derive(Debug)]
pub struct CallLog {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl CallLog {
    pub fn memory() -> Self {
        Self { path: None, inner: Mutex::new(Inner::default()) }
    }

    pub fn to_file(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            inner: Mutex::new(Inner { file: Some(file), records: Vec::new() }),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn records(&self) -> Vec<CallRecord> {
        self.inner.lock().expect("call log poisoned").records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("call log poisoned").records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(super) fn append(
        &self,
        req: &CompletionRequest,
        outcome: &Result<CompletionResult, LlmError>,
        started: DateTime<Utc>,
        latency_ms: u64,
        backend: BackendKind,
    ) -> Result<(), LlmError> {
        let mut inner = self.inner.lock().expect("call log poisoned");
        let (response, error, usage) = match outcome {
            Ok(r) => (Some(r.text.clone()), None, r.usage),
            Err(e) => (None, Some(e.to_string()), Usage::default()),
        };
        let record = CallRecord {
            seq: inner.records.len() as u64 + 1,
            tag: req.request_tag.clone(),
            purpose: req.purpose,
            model_id: req.model_id.clone(),
            temperature: req.temperature,
            max_tokens: req.max_tokens,
            messages: req.messages.clone(),
            response,
            error,
            usage,
            backend,
            started_at: started.to_rfc3339_opts(SecondsFormat::Millis, true),
            finished_at: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            latency_ms,
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&record).map_err(|e| LlmError::Io(e.to_string()))?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|()| file.flush())
                .map_err(|e| LlmError::Io(e.to_string()))?;
        }
        inner.records.push(record);
        Ok(())
    }
}

/// Parses JSONL call-log text.
pub fn parse_call_log(text: &str) -> Result<Vec<CallRecord>, LlmError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| LlmError::CorruptLog { line: i + 1, reason: e.to_string() })
        })
        .collect()
}

pub fn read_call_log(path: &Path) -> Result<Vec<CallRecord>, LlmError> {
    if !path.is_file() {
        return Err(LlmError::MissingLog(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| LlmError::Io(e.to_string()))?;
    parse_call_log(&text)
}

/// Builds a transcript that replays the run recorded in `run_dir`.
pub fn record_transcript(run_dir: &Path) -> Result<Transcript, LlmError> {
    let records = read_call_log(&run_dir.join(CALL_LOG_FILE))?;
    Ok(Transcript::from_records(&records))
}

impl Transcript {
    pub fn from_records(records: &[CallRecord]) -> Self {
        Transcript {
            entries: records
                .iter()
                .map(|r| TranscriptEntry {
                    tag: r.tag.clone(),
                    contains: Vec::new(),
                    response: r.response.clone(),
                    error: r.error.clone(),
                })
                .collect(),
        }
    }
}
