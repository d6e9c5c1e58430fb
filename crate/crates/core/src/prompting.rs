// SPDX-License-Identifier: Apache-2.0

//! Prompt construction for the spec generator and the RTL reconstructor.
//!
//! Prompt wording lives in `prompts/*.txt`. Each template has a system part
//! and a user part and uses `{{name}}` placeholders. The reconstructor-bound
//! builders only accept a spec and the reconstructor's own compile output, so
//! the original RTL and checker logs cannot reach them.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spec_model::{render_spec, StructuredSpec};

pub const RTL_START: &str = "[RTL_START]";
pub const RTL_END: &str = "[RTL_END]";
pub const REPORT_START: &str = "[REPORT_START]";
pub const REPORT_END: &str = "[REPORT_END]";
pub const COMPILER_LOG_START: &str = "[COMPILER_LOG_START]";
pub const COMPILER_LOG_END: &str = "[COMPILER_LOG_END]";

pub const RECONSTRUCTION_HEADER: &str = "# Reconstruction RTL:";
pub const TOOL_LOG_HEADER: &str = "# Logs of equivalent-checking tool:";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("RTL input is empty")]
    EmptyInput,
    #[error("refinement prompts are only built after a failed verification")]
    ReportIsPass,
    #[error("compiler diagnostics are empty")]
    EmptyDiagnostics,
    #[error("template `{template}` is malformed: {reason}")]
    Template { template: String, reason: String },
    #[error("failed to read prompt template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptPurpose {
    SpecFirstRound,
    SpecRefinement,
    SpecRegeneration,
    Reconstruct,
    CompileFix,
}

impl PromptPurpose {
    /// Prompts that go to the RTL reconstructor and are subject to the
    /// information-hiding audit.
    pub fn is_reconstructor_bound(self) -> bool {
        matches!(self, PromptPurpose::Reconstruct | PromptPurpose::CompileFix)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub purpose: PromptPurpose,
    /// Identifiers of the artifacts the texts were built from.
    pub provenance: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// The verifier's report as shown to the spec generator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReportText {
    pub verdict: Verdict,
    pub reconstructed_rtl: String,
    pub tool_log_excerpt: String,
}

impl VerificationReportText {
    pub fn verdict_line(&self) -> String {
        format!("Spec Verification {}.", self.verdict)
    }

    /// The report stripped to its verdict line, for pass/fail-only feedback.
    pub fn verdict_only(&self) -> Self {
        Self {
            verdict: self.verdict,
            reconstructed_rtl: String::new(),
            tool_log_excerpt: String::new(),
        }
    }

    /// Report body without the surrounding markers. Empty sections are
    /// omitted.
    pub fn body(&self) -> String {
        let mut out = self.verdict_line();
        out.push('\n');
        if !self.reconstructed_rtl.trim().is_empty() {
            out.push('\n');
            out.push_str(RECONSTRUCTION_HEADER);
            out.push_str("\n\n");
            out.push_str(self.reconstructed_rtl.trim_end());
            out.push('\n');
        }
        if !self.tool_log_excerpt.trim().is_empty() {
            out.push('\n');
            out.push_str(TOOL_LOG_HEADER);
            out.push_str("\n\n");
            out.push_str(self.tool_log_excerpt.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn render(&self) -> String {
        format!("{REPORT_START}\n{}{REPORT_END}", self.body())
    }
}

/// Truncates `text` to at most `budget` bytes on a char boundary, marking
/// the cut.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    const MARK: &str = "\n...(truncated)...";
    if text.len() <= budget {
        return text.to_string();
    }
    let mut cut = budget.saturating_sub(MARK.len());
    while cut > 0 && !text.is_char_boundary(cut) {
        cut -= 1;
    }
    format!("{}{MARK}", &text[..cut])
}

#[derive(Debug, Clone)]
struct Template {
    name: &'static str,
    system: String,
    user: String,
}

impl Template {
    fn parse(name: &'static str, source: &str) -> Result<Self, PromptError> {
        let malformed = |reason: &str| PromptError::Template {
            template: name.to_string(),
            reason: reason.to_string(),
        };
        let rest = source
            .trim_start()
            .strip_prefix("=== system ===")
            .ok_or_else(|| malformed("missing `=== system ===` header"))?;
        let (system, user) = rest
            .split_once("\n=== user ===")
            .ok_or_else(|| malformed("missing `=== user ===` header"))?;
        Ok(Self {
            name,
            system: system.trim().to_string(),
            user: user.trim_start_matches('\n').trim_end().to_string(),
        })
    }

    fn fill(&self, values: &[(&str, &str)]) -> Result<(String, String), PromptError> {
        Ok((
            substitute(self.name, &self.system, values)?,
            substitute(self.name, &self.user, values)?,
        ))
    }
}

/// Single-pass `{{name}}` substitution; inserted values are never rescanned.
fn substitute(template: &str, text: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| PromptError::Template {
            template: template.to_string(),
            reason: "unterminated placeholder".into(),
        })?;
        let key = after[..close].trim();
        let value = values
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::Template {
                template: template.to_string(),
                reason: format!("no value for placeholder `{key}`"),
            })?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

const TEMPLATE_FILES: [&str; 5] = [
    "first_round.txt",
    "refinement.txt",
    "reconstruct.txt",
    "compile_fix.txt",
    "regenerate.txt",
];

#[derive(Debug, Clone)]
pub struct PromptBuilder {
    first_round: Template,
    refinement: Template,
    reconstruct: Template,
    compile_fix: Template,
    regenerate: Template,
}

impl Default for PromptBuilder {
    fn default() -> Self {
        Self::from_sources([
            include_str!("../prompts/first_round.txt").to_string(),
            include_str!("../prompts/refinement.txt").to_string(),
            include_str!("../prompts/reconstruct.txt").to_string(),
            include_str!("../prompts/compile_fix.txt").to_string(),
            include_str!("../prompts/regenerate.txt").to_string(),
        ])
        .expect("bundled prompt templates are well-formed")
    }
}

impl PromptBuilder {
    /// Loads templates from a directory laid out like `prompts/`.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut sources: [String; 5] = Default::default();
        for (slot, file) in sources.iter_mut().zip(TEMPLATE_FILES) {
            let path = dir.join(file);
            *slot = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        Self::from_sources(sources)
    }

    fn from_sources(sources: [String; 5]) -> Result<Self, PromptError> {
        let [first, refine, recon, fix, regen] = sources;
        Ok(Self {
            first_round: Template::parse("first_round", &first)?,
            refinement: Template::parse("refinement", &refine)?,
            reconstruct: Template::parse("reconstruct", &recon)?,
            compile_fix: Template::parse("compile_fix", &fix)?,
            regenerate: Template::parse("regenerate", &regen)?,
        })
    }

    pub fn first_round(&self, rtl: &str) -> Result<PromptBundle, PromptError> {
        if rtl.trim().is_empty() {
            return Err(PromptError::EmptyInput);
        }
        let (system_text, user_text) = self.first_round.fill(&[("rtl", rtl)])?;
        Ok(PromptBundle {
            system_text,
            user_text,
            purpose: PromptPurpose::SpecFirstRound,
            provenance: vec!["original_rtl".into()],
        })
    }

    pub fn refinement(
        &self,
        prev_spec: &StructuredSpec,
        report: &VerificationReportText,
    ) -> Result<PromptBundle, PromptError> {
        if report.verdict == Verdict::Pass {
            return Err(PromptError::ReportIsPass);
        }
        let previous = render_spec(prev_spec);
        let report_text = report.render();
        let (system_text, user_text) = self.refinement.fill(&[
            ("previous_spec", previous.trim_end()),
            ("report", &report_text),
        ])?;
        Ok(PromptBundle {
            system_text,
            user_text,
            purpose: PromptPurpose::SpecRefinement,
            provenance: vec![prev_spec.id(), "verification_report".into()],
        })
    }

    pub fn reconstruction(&self, spec: &StructuredSpec) -> Result<PromptBundle, PromptError> {
        let rendered = render_spec(spec);
        let (system_text, user_text) = self.reconstruct.fill(&[
            ("module_name", &spec.module_name),
            ("spec", rendered.trim_end()),
        ])?;
        Ok(PromptBundle {
            system_text,
            user_text,
            purpose: PromptPurpose::Reconstruct,
            provenance: vec![spec.id()],
        })
    }

    pub fn compile_fix(
        &self,
        spec: &StructuredSpec,
        bad_rtl: &str,
        compiler_stderr: &str,
    ) -> Result<PromptBundle, PromptError> {
        if compiler_stderr.trim().is_empty() {
            return Err(PromptError::EmptyDiagnostics);
        }
        let rendered = render_spec(spec);
        let (system_text, user_text) = self.compile_fix.fill(&[
            ("module_name", &spec.module_name),
            ("spec", rendered.trim_end()),
            ("bad_rtl", bad_rtl.trim_end()),
            ("compiler_stderr", compiler_stderr.trim_end()),
        ])?;
        Ok(PromptBundle {
            system_text,
            user_text,
            purpose: PromptPurpose::CompileFix,
            provenance: vec![spec.id(), "reconstructed_rtl".into(), "compiler_stderr".into()],
        })
    }

    /// Follow-up asking the generator to re-emit an unparsable spec.
    pub fn regeneration(&self, problem: &str) -> Result<PromptBundle, PromptError> {
        let (system_text, user_text) = self.regenerate.fill(&[("problem", problem)])?;
        Ok(PromptBundle {
            system_text,
            user_text,
            purpose: PromptPurpose::SpecRegeneration,
            provenance: vec!["generator_output".into()],
        })
    }
}

pub fn build_first_round_prompt(rtl: &str) -> Result<PromptBundle, PromptError> {
    PromptBuilder::default().first_round(rtl)
}

pub fn build_refinement_prompt(
    prev_spec: &StructuredSpec,
    report: &VerificationReportText,
) -> Result<PromptBundle, PromptError> {
    PromptBuilder::default().refinement(prev_spec, report)
}

pub fn build_reconstruction_prompt(spec: &StructuredSpec) -> Result<PromptBundle, PromptError> {
    PromptBuilder::default().reconstruction(spec)
}

pub fn build_compile_fix_prompt(
    spec: &StructuredSpec,
    bad_rtl: &str,
    compiler_stderr: &str,
) -> Result<PromptBundle, PromptError> {
    PromptBuilder::default().compile_fix(spec, bad_rtl, compiler_stderr)
}
