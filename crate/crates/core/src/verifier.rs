// SPDX-License-Identifier: Apache-2.0

//! Spec verification: reconstruct RTL from a spec, retry on compile
//! failures, check equivalence against the original and build the report
//! returned to the spec generator.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdl::{classify, ports, CompileResult, Diagnosis, DiagnosisKind, HdlError, Toolchain};
use crate::llm::{CallLog, CompletionRequest, Gateway, LlmError};
use crate::loop_engine::{decide_next_action, Action};
use crate::prompting::{
    truncate_to_budget, PromptBuilder, PromptError, Verdict, VerificationReportText, RTL_END, RTL_START,
};
use crate::spec_model::{extract_marked_block, StructuredSpec};
use crate::store::{ArtifactKind, RunStore, StoreError};

pub const GOLD_FILE: &str = "gold.v";
pub const GATE_FILE: &str = "gate.v";

/// How compile retries and re-reconstructions after E3/E4 share the
/// reconstructor budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BudgetPolicy {
    /// One counter for both kinds of retry.
    #[default]
    Joint,
    /// Each kind of retry has its own counter of `max_recon_retries`.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierBudget {
    pub max_recon_retries: u32,
    #[serde(default)]
    pub policy: BudgetPolicy,
}

impl Default for VerifierBudget {
    fn default() -> Self {
        Self { max_recon_retries: 2, policy: BudgetPolicy::Joint }
    }
}

impl VerifierBudget {
    pub fn new(max_recon_retries: u32) -> Self {
        Self { max_recon_retries, policy: BudgetPolicy::Joint }
    }

    /// Upper bound on reconstructor calls for one spec.
    pub fn max_attempts(&self) -> u32 {
        match self.policy {
            BudgetPolicy::Joint => 1 + self.max_recon_retries,
            BudgetPolicy::Separate => 1 + 2 * self.max_recon_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierResult {
    pub diagnosis: Diagnosis,
    pub reconstructed_rtl: Option<String>,
    pub report: VerificationReportText,
    pub recon_attempts: u32,
    pub fec_runs: u32,
}

#[derive(Debug, Error)]
pub enum VerifierError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("reconstruction output lacks {RTL_START}/{RTL_END} markers after {attempts} attempt(s)")]
    MarkerMissing { attempts: u32 },
    #[error(transparent)]
    Tool(#[from] HdlError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub max_counterexamples: usize,
    /// Byte budget for the log section.
    pub log_budget: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self { max_counterexamples: 5, log_budget: 16 * 1024 }
    }
}

/// Everything a verification needs besides the spec and the original.
pub struct VerifierContext<'a> {
    pub gateway: &'a Gateway,
    pub log: &'a CallLog,
    pub toolchain: &'a dyn Toolchain,
    pub prompts: &'a PromptBuilder,
    pub model: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Where artifacts are recorded; `None` keeps them off disk.
    pub store: Option<&'a RunStore>,
    /// Parent of the per-attempt tool directories.
    pub work_root: &'a Path,
    /// Request-tag prefix, e.g. `"case_7/"`, or empty.
    pub lane: &'a str,
    pub round: u32,
    pub report: ReportOptions,
}

const INCONCLUSIVE_MESSAGE: &str =
    "Equivalence checking was inconclusive: the checker neither proved nor refuted equivalence within its limits.";
const INVALID_ORIGINAL_MESSAGE: &str = "The original design could not be processed by the equivalence checker.";

/// Builds the generator-facing report for a verification outcome.
pub fn build_report(result: &VerifierResult) -> VerificationReportText {
    build_report_with(&result.diagnosis, result.reconstructed_rtl.as_deref(), ReportOptions::default())
}

pub fn build_report_with(diag: &Diagnosis, rtl: Option<&str>, opts: ReportOptions) -> VerificationReportText {
    let verdict = if diag.kind == DiagnosisKind::Pass { Verdict::Pass } else { Verdict::Fail };
    let log = match diag.kind {
        DiagnosisKind::Pass => String::new(),
        DiagnosisKind::E2NonCompilableRecon => truncate_to_budget(diag.evidence.trim_end(), opts.log_budget),
        DiagnosisKind::E3FunctionalMismatch => {
            let blocks: Vec<String> =
                diag.counterexamples.iter().take(opts.max_counterexamples).map(|c| c.render()).collect();
            let mut text = blocks.join("\n\n");
            let evidence = diag.evidence.trim();
            if !evidence.is_empty() {
                let remaining = opts.log_budget.saturating_sub(text.len() + 2);
                if !text.is_empty() {
                    text.push_str("\n\n");
                }
                text.push_str(&truncate_to_budget(evidence, remaining));
            }
            text
        }
        DiagnosisKind::E4Inconclusive => with_evidence(INCONCLUSIVE_MESSAGE, &diag.evidence, opts.log_budget),
        DiagnosisKind::E1InvalidOriginal => with_evidence(INVALID_ORIGINAL_MESSAGE, &diag.evidence, opts.log_budget),
    };
    VerificationReportText {
        verdict,
        reconstructed_rtl: rtl.map(|r| r.trim_end().to_string()).unwrap_or_default(),
        tool_log_excerpt: log,
    }
}

fn with_evidence(message: &str, evidence: &str, budget: usize) -> String {
    let evidence = evidence.trim();
    if evidence.is_empty() {
        return message.to_string();
    }
    let remaining = budget.saturating_sub(message.len() + 1);
    format!("{message}\n{}", truncate_to_budget(evidence, remaining))
}

/// Removes absolute work-directory prefixes from tool output.
fn scrub_paths(text: &str, work_dir: &Path) -> String {
    let mut out = text.to_string();
    for p in [work_dir.to_path_buf(), std::fs::canonicalize(work_dir).unwrap_or_default()] {
        let s = p.display().to_string();
        if !s.is_empty() {
            out = out.replace(&format!("{s}/"), "").replace(&s, ".");
        }
    }
    out
}

enum Next {
    Fresh,
    Fix { bad_rtl: String, stderr: String },
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf, VerifierError> {
    let path = dir.join(name);
    std::fs::write(&path, content).map_err(|e| VerifierError::Io(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn top_mismatch(spec: &StructuredSpec, original_rtl: &str) -> Option<Diagnosis> {
    let original_top = ports::top_module_name(original_rtl)?;
    (original_top != spec.module_name).then(|| {
        Diagnosis::new(
            DiagnosisKind::E3FunctionalMismatch,
            format!(
                "Top module mismatch: the specification names module `{}` but the original design's top module is `{}`.",
                spec.module_name, original_top
            ),
        )
    })
}

/// Reconstructs, compiles and checks one spec against the original design.
pub fn verify_spec(
    ctx: &VerifierContext<'_>,
    spec: &StructuredSpec,
    original_rtl: &str,
    budget: VerifierBudget,
) -> Result<VerifierResult, VerifierError> {
    let k = ctx.round;
    let finish = |diagnosis: Diagnosis, rtl: Option<String>, attempts: u32, fec_runs: u32| {
        let report = build_report_with(&diagnosis, rtl.as_deref(), ctx.report);
        let result = VerifierResult { diagnosis, reconstructed_rtl: rtl, report, recon_attempts: attempts, fec_runs };
        if let Some(store) = ctx.store {
            store.write_artifact(ArtifactKind::Report, Some(k), &format!("report_round_{k}.txt"), &result.report.body())?;
        }
        Ok::<_, VerifierError>(result)
    };

    if let Some(diag) = top_mismatch(spec, original_rtl) {
        return finish(diag, None, 0, 0);
    }

    let max_attempts = budget.max_attempts();
    let (mut compile_left, mut recheck_left) = match budget.policy {
        BudgetPolicy::Joint => (0, 0),
        BudgetPolicy::Separate => (budget.max_recon_retries, budget.max_recon_retries),
    };
    let mut attempts = 0u32;
    let mut fec_runs = 0u32;
    let mut consecutive_missing = 0u32;
    let mut next = Next::Fresh;
    let mut last: (Diagnosis, Option<String>) =
        (Diagnosis::new(DiagnosisKind::E4Inconclusive, "no reconstruction attempted"), None);
    let original_ok = CompileResult::passed("original");

    while attempts < max_attempts {
        attempts += 1;
        let j = attempts;
        let bundle = match &next {
            Next::Fresh => ctx.prompts.reconstruction(spec)?,
            Next::Fix { bad_rtl, stderr } => ctx.prompts.compile_fix(spec, bad_rtl, stderr)?,
        };
        let tag = format!("{}recon_round_{k}_attempt_{j}", ctx.lane);
        let req = CompletionRequest::from_bundle(ctx.model, &bundle, tag).with_sampling(ctx.temperature, ctx.max_tokens);
        let response = ctx.gateway.complete(&req, ctx.log)?;

        let Some(rtl) = extract_marked_block(&response.text, RTL_START, RTL_END).map(|s| s.trim().to_string())
        else {
            consecutive_missing += 1;
            if consecutive_missing >= 2 || attempts >= max_attempts {
                return Err(VerifierError::MarkerMissing { attempts });
            }
            next = Next::Fresh;
            continue;
        };
        consecutive_missing = 0;
        let rtl_file = format!("{rtl}\n");
        if let Some(store) = ctx.store {
            store.write_artifact(ArtifactKind::Recon, Some(k), &format!("recon_round_{k}_attempt_{j}.v"), &rtl_file)?;
        }

        let work = ctx.work_root.join(format!("round_{k}_attempt_{j}"));
        std::fs::create_dir_all(&work).map_err(|e| VerifierError::Io(format!("{}: {e}", work.display())))?;
        write_file(&work, GOLD_FILE, original_rtl)?;
        let recon = match ctx.toolchain.compile(&rtl_file, &work, GATE_FILE, Some(&spec.module_name)) {
            Ok(r) => r,
            Err(HdlError::Timeout { tool, seconds }) => {
                CompileResult::failed(tool.clone(), format!("{tool}: compilation timed out after {seconds} s"))
            }
            Err(e) => return Err(e.into()),
        };
        if !recon.ok {
            let stderr = scrub_paths(&recon.stderr, &work);
            let diag = classify(&original_ok, &CompileResult::failed(recon.tool.clone(), stderr.clone()), None);
            last = (diag, Some(rtl.clone()));
            let left = match budget.policy {
                BudgetPolicy::Joint => max_attempts - attempts,
                BudgetPolicy::Separate => compile_left,
            };
            match decide_next_action(&last.0, left) {
                Action::ReconstructAgain => {
                    compile_left = compile_left.saturating_sub(1);
                    next = if stderr.trim().is_empty() { Next::Fresh } else { Next::Fix { bad_rtl: rtl, stderr } };
                    continue;
                }
                _ => break,
            }
        }

        let fec = ctx.toolchain.equivalence(&work, GOLD_FILE, GATE_FILE, &spec.module_name)?;
        fec_runs += 1;
        if let Some(store) = ctx.store {
            store.write_artifact(ArtifactKind::FecLog, Some(k), &format!("fec_{k}_{j}.log"), &fec.raw_log)?;
        }
        let mut diag = classify(&original_ok, &recon, Some(&fec));
        diag.evidence = scrub_paths(&diag.evidence, &work);
        last = (diag, Some(rtl));
        let left = match budget.policy {
            BudgetPolicy::Joint => max_attempts - attempts,
            BudgetPolicy::Separate => recheck_left,
        };
        match decide_next_action(&last.0, left) {
            Action::ReconstructAgain => {
                recheck_left = recheck_left.saturating_sub(1);
                next = Next::Fresh;
            }
            _ => break,
        }
    }
    finish(last.0, last.1, attempts, fec_runs)
}
