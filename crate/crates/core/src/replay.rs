// SPDX-License-Identifier: Apache-2.0

//! Deterministic re-execution of a recorded run from its directory.

use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::config::ToolConfig;
use crate::hdl::Toolchain;
use crate::llm::{read_call_log, Gateway, LlmError, ScriptedBackend, Transcript, CALL_LOG_FILE};
use crate::loop_engine::FeedbackMode;
use crate::runner::{execute_run, prompts_for, RunEnv};
use crate::store::{RunRecord, RunStore, ORIGINAL_FILE};

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("run record missing or unreadable: {0}")]
    MissingRecord(String),
    #[error("transcript missing or unreadable: {0}")]
    MissingTranscript(String),
    #[error("recorded run is inconsistent: {0}")]
    Invalid(String),
    #[error("replay failed: {0}")]
    Execution(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReplayOutcome {
    Identical { artifacts_compared: usize },
    Diverged { artifact: String, reason: String },
}

/// Loads the record and config needed to replay `run_dir`.
pub fn load_run(run_dir: &Path) -> Result<(RunRecord, ToolConfig), ReplayError> {
    let record = RunStore::read_record(run_dir).map_err(|e| ReplayError::MissingRecord(e.to_string()))?;
    let config: ToolConfig =
        serde_json::from_value(record.config.clone()).map_err(|e| ReplayError::Invalid(format!("config: {e}")))?;
    Ok((record, config))
}

/// Re-runs the recorded loop against its transcript and compares every
/// replayed artifact byte for byte with the files in `run_dir`.
pub fn replay_run(run_dir: &Path, toolchain: &dyn Toolchain) -> Result<ReplayOutcome, ReplayError> {
    let (record, config) = load_run(run_dir)?;
    let records = read_call_log(&run_dir.join(CALL_LOG_FILE)).map_err(|e| match e {
        LlmError::MissingLog(p) => ReplayError::MissingTranscript(p),
        other => ReplayError::MissingTranscript(other.to_string()),
    })?;
    let original = std::fs::read_to_string(run_dir.join(ORIGINAL_FILE))
        .map_err(|e| ReplayError::Invalid(format!("{ORIGINAL_FILE}: {e}")))?;
    let mode = FeedbackMode::from_key(&record.mode)
        .ok_or_else(|| ReplayError::Invalid(format!("unknown mode `{}`", record.mode)))?;

    let scratch = tempfile::tempdir().map_err(|e| ReplayError::Execution(e.to_string()))?;
    let store = RunStore::at(scratch.path()).map_err(|e| ReplayError::Execution(e.to_string()))?;
    let gateway = Gateway::new(Arc::new(ScriptedBackend::new(Transcript::from_records(&records))));
    let prompts = prompts_for(&config).map_err(|e| ReplayError::Execution(e.to_string()))?;
    let versions = Default::default();
    let env = RunEnv { gateway: &gateway, toolchain, prompts: &prompts, tool_versions: &versions };
    let out = execute_run(&env, &store, &record.case_id, &original, mode, &config, &record.lane)
        .map_err(|e| ReplayError::Execution(e.to_string()))?;

    let mut compared = 0;
    for entry in record.artifacts.iter().filter(|a| a.kind.is_replayed()) {
        let recorded = std::fs::read(run_dir.join(&entry.path));
        let replayed = std::fs::read(store.dir().join(&entry.path));
        let reason = match (recorded, replayed) {
            (Err(e), _) => Some(format!("recorded file unreadable: {e}")),
            (_, Err(_)) => Some("not produced on replay".to_string()),
            (Ok(a), Ok(b)) if a != b => Some("content differs".to_string()),
            _ => None,
        };
        if let Some(reason) = reason {
            return Ok(ReplayOutcome::Diverged { artifact: entry.path.clone(), reason });
        }
        compared += 1;
    }
    for entry in out.record.artifacts.iter().filter(|a| a.kind.is_replayed()) {
        if !record.artifacts.iter().any(|r| r.path == entry.path) {
            return Ok(ReplayOutcome::Diverged {
                artifact: entry.path.clone(),
                reason: "produced on replay but absent from the record".into(),
            });
        }
    }
    Ok(ReplayOutcome::Identical { artifacts_compared: compared })
}
