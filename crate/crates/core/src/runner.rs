// SPDX-License-Identifier: Apache-2.0

//! One recorded run: loop execution plus the files that make the run
//! directory self-describing.

use std::collections::BTreeMap;
use std::time::Instant;

use thiserror::Error;

use crate::config::ToolConfig;
use crate::hdl::Toolchain;
use crate::llm::{CallLog, Gateway, LlmError, CALL_LOG_FILE};
use crate::loop_engine::{run_specloop, FeedbackMode, LoopContext, LoopState};
use crate::prompting::{PromptBuilder, PromptError};
use crate::store::{ArtifactKind, RunRecord, RunStore, StoreError};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("{0}")]
    Other(String),
}

/// Shared services for runs.
pub struct RunEnv<'a> {
    pub gateway: &'a Gateway,
    pub toolchain: &'a dyn Toolchain,
    pub prompts: &'a PromptBuilder,
    pub tool_versions: &'a BTreeMap<String, String>,
}

pub struct RunOutput {
    pub state: LoopState,
    pub record: RunRecord,
    pub log: CallLog,
}

/// Prompt templates selected by the config.
pub fn prompts_for(config: &ToolConfig) -> Result<PromptBuilder, PromptError> {
    if config.prompt_dir.trim().is_empty() {
        Ok(PromptBuilder::default())
    } else {
        PromptBuilder::from_dir(std::path::Path::new(&config.prompt_dir))
    }
}

/// Run-directory file holding the final spec, if any round produced one.
pub fn final_spec_file(state: &LoopState) -> Option<String> {
    state
        .history
        .iter()
        .rev()
        .find(|r| r.spec.is_some())
        .map(|r| format!("spec_round_{}.txt", r.round))
}

/// Executes the loop for one design inside `store` and writes `run.json`.
pub fn execute_run(
    env: &RunEnv<'_>,
    store: &RunStore,
    case_id: &str,
    original_rtl: &str,
    mode: FeedbackMode,
    config: &ToolConfig,
    lane: &str,
) -> Result<RunOutput, RunError> {
    let start = Instant::now();
    let started_at = chrono::Utc::now().to_rfc3339();
    store.write_artifact(ArtifactKind::Config, None, CONFIG_FILE, &config.to_toml())?;
    let log = CallLog::to_file(&store.dir().join(CALL_LOG_FILE))?;
    let work_root = store.work_dir("")?;
    let ctx = LoopContext {
        gateway: env.gateway,
        log: &log,
        toolchain: env.toolchain,
        prompts: env.prompts,
        store: Some(store),
        work_root: &work_root,
        lane,
        case_id,
    };
    let state = run_specloop(&ctx, original_rtl, &config.loop_config(mode));
    let record = RunRecord {
        case_id: case_id.to_string(),
        mode: mode.key().to_string(),
        config: serde_json::to_value(config).map_err(StoreError::from)?,
        status: format!("{:?}", state.status),
        final_round: state.round,
        artifacts: store.artifacts(),
        wall_time_ms: start.elapsed().as_millis() as u64,
        tool_versions: env.tool_versions.clone(),
        started_at,
        lane: lane.to_string(),
    };
    store.write_record(&record)?;
    Ok(RunOutput { state, record, log })
}
