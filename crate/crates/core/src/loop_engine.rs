// SPDX-License-Identifier: Apache-2.0

//! The outer refinement loop: generate a spec, verify it, and feed the
//! verifier's report back to the generator until the spec passes, the
//! budget runs out, or the generator stops.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hdl::{ports, Diagnosis, DiagnosisKind, HdlError, Toolchain};
use crate::llm::{CallLog, ChatMessage, CompletionRequest, Gateway, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::prompting::{PromptBuilder, PromptBundle, VerificationReportText};
use crate::spec_model::{canonical_form, extract_spec_block, lint_spec_with_widths, parse_spec, render_spec, StructuredSpec};
use crate::store::{ArtifactKind, RunStore, STATE_FILE};
use crate::verifier::{verify_spec, ReportOptions, VerifierBudget, VerifierContext, VerifierResult};

/// What the verifier tells the generator on failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum FeedbackMode {
    #[default]
    FullDiagnosis,
    PassFailOnly,
    SingleRound,
}

impl FeedbackMode {
    pub const ALL: [FeedbackMode; 3] = [FeedbackMode::SingleRound, FeedbackMode::PassFailOnly, FeedbackMode::FullDiagnosis];

    /// Short name used on the command line and in result files.
    pub fn key(self) -> &'static str {
        match self {
            FeedbackMode::FullDiagnosis => "full",
            FeedbackMode::PassFailOnly => "passfail",
            FeedbackMode::SingleRound => "single",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            FeedbackMode::FullDiagnosis => "Full Diagnosis",
            FeedbackMode::PassFailOnly => "Pass/Fail-Only",
            FeedbackMode::SingleRound => "Single Round",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.key() == key)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_spec_retries: u32,
    pub feedback_mode: FeedbackMode,
    pub verifier_budget: VerifierBudget,
    pub generator_model: String,
    pub reconstructor_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub report: ReportOptions,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            max_spec_retries: 2,
            feedback_mode: FeedbackMode::FullDiagnosis,
            verifier_budget: VerifierBudget::default(),
            generator_model: "qwen/qwen3-coder".into(),
            reconstructor_model: "qwen/qwen3-coder".into(),
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            report: ReportOptions::default(),
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be positive".into());
        }
        if self.generator_model.trim().is_empty() || self.reconstructor_model.trim().is_empty() {
            return Err("model ids must be non-empty".into());
        }
        Ok(())
    }

    /// Spec generations allowed in one run.
    pub fn max_rounds(&self) -> u32 {
        match self.feedback_mode {
            FeedbackMode::SingleRound => 1,
            _ => 1 + self.max_spec_retries,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Status {
    Running,
    Passed,
    BudgetExhausted,
    NonVerifiable,
    GeneratorStopped,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        self != Status::Running
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    StopNonVerifiable,
    ReconstructAgain,
    SendCompileErrorToGenerator,
    SendCounterexampleToGenerator,
    SendErrorMessageToGenerator,
    Accept,
}

/// Action policy for a diagnosis given the reconstructor budget left.
pub fn decide_next_action(diag: &Diagnosis, recon_budget_left: u32) -> Action {
    let again = recon_budget_left > 0;
    match diag.kind {
        DiagnosisKind::Pass => Action::Accept,
        DiagnosisKind::E1InvalidOriginal => Action::StopNonVerifiable,
        DiagnosisKind::E2NonCompilableRecon if again => Action::ReconstructAgain,
        DiagnosisKind::E2NonCompilableRecon => Action::SendCompileErrorToGenerator,
        DiagnosisKind::E3FunctionalMismatch if again => Action::ReconstructAgain,
        DiagnosisKind::E3FunctionalMismatch => Action::SendCounterexampleToGenerator,
        DiagnosisKind::E4Inconclusive if again => Action::ReconstructAgain,
        DiagnosisKind::E4Inconclusive => Action::SendErrorMessageToGenerator,
    }
}

/// True when the generator re-emitted the previous spec.
pub fn detect_generator_stop(prev_spec: &StructuredSpec, new_spec: &StructuredSpec) -> bool {
    canonical_form(prev_spec) == canonical_form(new_spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub spec: Option<StructuredSpec>,
    /// Why the generator output could not be parsed.
    pub generation_error: Option<String>,
    pub lint: Vec<String>,
    pub verification: Option<VerifierResult>,
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OriginalCheck {
    pub ok: bool,
    pub top_module: Option<String>,
    pub stderr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub case_id: String,
    pub mode: FeedbackMode,
    pub round: u32,
    pub history: Vec<RoundRecord>,
    pub status: Status,
    pub final_spec: Option<StructuredSpec>,
    pub original: Option<OriginalCheck>,
    /// Failure that ended the run early.
    pub error: Option<String>,
}

impl LoopState {
    fn new(case_id: &str, mode: FeedbackMode) -> Self {
        Self {
            case_id: case_id.to_string(),
            mode,
            round: 0,
            history: Vec::new(),
            status: Status::Running,
            final_spec: None,
            original: None,
            error: None,
        }
    }

    /// Diagnosis of the last verified round.
    pub fn last_diagnosis(&self) -> Option<&Diagnosis> {
        self.history.iter().rev().find_map(|r| r.verification.as_ref().map(|v| &v.diagnosis))
    }

    /// True when the final spec passed verification.
    pub fn verified(&self) -> bool {
        self.status == Status::Passed
    }
}

pub struct LoopContext<'a> {
    pub gateway: &'a Gateway,
    pub log: &'a CallLog,
    pub toolchain: &'a dyn Toolchain,
    pub prompts: &'a PromptBuilder,
    pub store: Option<&'a RunStore>,
    pub work_root: &'a Path,
    /// Request-tag prefix for this run.
    pub lane: &'a str,
    pub case_id: &'a str,
}

fn save_state(ctx: &LoopContext<'_>, state: &LoopState) -> Result<(), String> {
    if let Some(store) = ctx.store {
        store.write_json(ArtifactKind::State, None, STATE_FILE, state).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn original_widths(rtl: &str) -> Option<Vec<(String, Option<u32>)>> {
    let modules = ports::scan_modules(rtl);
    let top = ports::top_module(&modules)?;
    Some(top.ports.iter().map(|p| (p.name.clone(), p.width)).collect())
}

fn check_original(ctx: &LoopContext<'_>, rtl: &str) -> Result<OriginalCheck, HdlError> {
    let top = ports::top_module_name(rtl);
    let work = ctx.work_root.join("original");
    std::fs::create_dir_all(&work).map_err(|e| HdlError::Io(format!("{}: {e}", work.display())))?;
    let result = match ctx.toolchain.compile(rtl, &work, "original.v", top.as_deref()) {
        Ok(r) => r,
        Err(HdlError::Timeout { tool, seconds }) => {
            crate::hdl::CompileResult::failed(tool.clone(), format!("{tool}: compilation timed out after {seconds} s"))
        }
        Err(e) => return Err(e),
    };
    Ok(OriginalCheck { ok: result.ok, top_module: top, stderr: result.stderr })
}

/// Runs the loop for one design. Failures of the model service or the tools
/// end the run with `BudgetExhausted` and the error recorded in the state.
pub fn run_specloop(ctx: &LoopContext<'_>, original_rtl: &str, config: &LoopConfig) -> LoopState {
    let mut state = LoopState::new(ctx.case_id, config.feedback_mode);
    if let Err(e) = run_inner(ctx, original_rtl, config, &mut state) {
        state.status = Status::BudgetExhausted;
        state.error = Some(e);
    }
    if let Err(e) = save_state(ctx, &state) {
        state.error.get_or_insert(e);
    }
    state
}

fn run_inner(ctx: &LoopContext<'_>, original_rtl: &str, config: &LoopConfig, state: &mut LoopState) -> Result<(), String> {
    config.validate()?;
    if let Some(store) = ctx.store {
        store
            .write_artifact(ArtifactKind::Original, None, crate::store::ORIGINAL_FILE, original_rtl)
            .map_err(|e| e.to_string())?;
    }
    let original = check_original(ctx, original_rtl).map_err(|e| e.to_string())?;
    let ok = original.ok;
    state.original = Some(original);
    if !ok {
        state.status = Status::NonVerifiable;
        return Ok(());
    }
    let widths = original_widths(original_rtl);

    let first = ctx.prompts.first_round(original_rtl).map_err(|e| e.to_string())?;
    let mut messages = vec![ChatMessage::system(first.system_text.clone()), ChatMessage::user(first.user_text.clone())];
    let mut purpose = first.purpose;
    let mut prev_spec: Option<StructuredSpec> = None;

    for k in 1..=config.max_rounds() {
        state.round = k;
        let req = CompletionRequest {
            model_id: config.generator_model.clone(),
            messages: messages.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            request_tag: format!("{}spec_round_{k}", ctx.lane),
            purpose: Some(purpose),
        };
        let response = ctx.gateway.complete(&req, ctx.log).map_err(|e| e.to_string())?;
        messages.push(ChatMessage::assistant(response.text.clone()));
        let last_round = k == config.max_rounds();

        let parsed = extract_spec_block(&response.text).and_then(|raw| parse_spec(&raw));
        let spec = match parsed {
            Ok(s) => s,
            Err(e) => {
                if let Some(store) = ctx.store {
                    store
                        .write_artifact(ArtifactKind::Spec, Some(k), &format!("spec_round_{k}.invalid.txt"), &response.text)
                        .map_err(|e| e.to_string())?;
                }
                state.history.push(RoundRecord {
                    round: k,
                    spec: None,
                    generation_error: Some(e.to_string()),
                    lint: Vec::new(),
                    verification: None,
                    action: None,
                });
                if last_round {
                    state.status = Status::BudgetExhausted;
                    return Ok(());
                }
                let regen = ctx.prompts.regeneration(&e.to_string()).map_err(|e| e.to_string())?;
                messages.push(ChatMessage::user(regen.user_text));
                purpose = regen.purpose;
                save_state(ctx, state)?;
                continue;
            }
        };
        if let Some(store) = ctx.store {
            store
                .write_artifact(ArtifactKind::Spec, Some(k), &format!("spec_round_{k}.txt"), &render_spec(&spec))
                .map_err(|e| e.to_string())?;
        }
        let lint = lint_spec_with_widths(&spec, widths.as_deref()).iter().map(|v| v.to_string()).collect();
        let mut record = RoundRecord {
            round: k,
            spec: Some(spec.clone()),
            generation_error: None,
            lint,
            verification: None,
            action: None,
        };

        if prev_spec.as_ref().is_some_and(|p| detect_generator_stop(p, &spec)) {
            state.history.push(record);
            state.final_spec = Some(spec);
            state.status = Status::GeneratorStopped;
            return Ok(());
        }

        if config.feedback_mode == FeedbackMode::SingleRound {
            state.history.push(record);
            state.final_spec = Some(spec);
            state.status = Status::BudgetExhausted;
            return Ok(());
        }

        let vctx = VerifierContext {
            gateway: ctx.gateway,
            log: ctx.log,
            toolchain: ctx.toolchain,
            prompts: ctx.prompts,
            model: &config.reconstructor_model,
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            store: ctx.store,
            work_root: ctx.work_root,
            lane: ctx.lane,
            round: k,
            report: config.report,
        };
        let result = match verify_spec(&vctx, &spec, original_rtl, config.verifier_budget) {
            Ok(r) => r,
            Err(e) => {
                state.history.push(record);
                state.final_spec = Some(spec);
                return Err(e.to_string());
            }
        };
        let action = decide_next_action(&result.diagnosis, 0);
        let report = match config.feedback_mode {
            FeedbackMode::PassFailOnly => result.report.verdict_only(),
            _ => result.report.clone(),
        };
        record.verification = Some(result);
        record.action = Some(action);
        state.history.push(record);
        state.final_spec = Some(spec.clone());

        match action {
            Action::Accept => {
                state.status = Status::Passed;
                return Ok(());
            }
            Action::StopNonVerifiable => {
                state.status = Status::NonVerifiable;
                return Ok(());
            }
            _ if last_round => {
                state.status = Status::BudgetExhausted;
                return Ok(());
            }
            _ => {}
        }
        let bundle = refinement_prompt(ctx.prompts, &spec, &report)?;
        messages.push(ChatMessage::user(bundle.user_text));
        purpose = bundle.purpose;
        prev_spec = Some(spec);
        save_state(ctx, state)?;
    }
    state.status = Status::BudgetExhausted;
    Ok(())
}

fn refinement_prompt(
    prompts: &PromptBuilder,
    spec: &StructuredSpec,
    report: &VerificationReportText,
) -> Result<PromptBundle, String> {
    prompts.refinement(spec, report).map_err(|e| e.to_string())
}

/// Maps `f` over `items` on a pool of `workers` threads (0 = CPU count),
/// preserving input order.
pub fn run_batch<T, R, F>(items: &[T], workers: usize, f: F) -> Result<Vec<R>, String>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| e.to_string())?;
    Ok(pool.install(|| items.par_iter().map(&f).collect()))
}
