// SPDX-License-Identifier: Apache-2.0

//! Verilog compiler, equivalence checker and simulator wrappers, plus the
//! failure taxonomy used by the verifier.

pub mod ports;
pub mod process;
mod tools;
mod trace;

use std::fmt;
use std::path::PathBuf;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tools::{
    compile_check, generate_eqy_config, interpret_fec_log, parse_eqy_config, resolve_yosys, run_equivalence,
    CompilerProfile, EqyConfig, FecProfile, SimOutcome, SimulatorProfile, SystemToolchain, Toolchain,
    ToolchainSettings,
};
pub use trace::{counterexamples_from_file, counterexamples_from_reader};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HdlError {
    #[error("tool not found: {0}")]
    ToolNotFound(String),
    #[error("simulator not found: {0}")]
    SimulatorNotFound(String),
    #[error("{tool} timed out after {seconds} s")]
    Timeout { tool: String, seconds: u64 },
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("no counterexample trace available")]
    NoTraceAvailable,
    #[error("trace parse error: {0}")]
    TraceParse(String),
    #[error("invalid tool configuration: {0}")]
    InvalidConfig(String),
    #[error("I/O error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub ok: bool,
    pub stderr: String,
    pub tool: String,
    pub duration_ms: u64,
}

impl CompileResult {
    pub fn passed(tool: impl Into<String>) -> Self {
        Self { ok: true, stderr: String::new(), tool: tool.into(), duration_ms: 0 }
    }

    pub fn failed(tool: impl Into<String>, stderr: impl Into<String>) -> Self {
        Self { ok: false, stderr: stderr.into(), tool: tool.into(), duration_ms: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FecVerdict {
    Equivalent,
    NotEquivalent,
    Inconclusive,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignSide {
    Gold,
    Gate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FecOutcome {
    pub verdict: FecVerdict,
    pub raw_log: String,
    pub trace_paths: Vec<PathBuf>,
    pub duration_ms: u64,
    /// Design that failed to load, when the checker could not read one.
    pub failed_side: Option<DesignSide>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counterexample {
    pub time: u64,
    pub signal: String,
    pub gold_value: String,
    pub gate_value: String,
}

impl Counterexample {
    /// Report block in the checker-feedback format.
    pub fn render(&self) -> String {
        format!(
            "Mismatched Signal:\nt={} sig={}\nrtl_reconstruct: {}\nrtl_original: {}",
            self.time, self.signal, self.gate_value, self.gold_value
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosisKind {
    Pass,
    #[serde(rename = "E1")]
    E1InvalidOriginal,
    #[serde(rename = "E2")]
    E2NonCompilableRecon,
    #[serde(rename = "E3")]
    E3FunctionalMismatch,
    #[serde(rename = "E4")]
    E4Inconclusive,
}

impl DiagnosisKind {
    pub const ALL: [DiagnosisKind; 5] = [
        DiagnosisKind::Pass,
        DiagnosisKind::E1InvalidOriginal,
        DiagnosisKind::E2NonCompilableRecon,
        DiagnosisKind::E3FunctionalMismatch,
        DiagnosisKind::E4Inconclusive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DiagnosisKind::Pass => "Pass",
            DiagnosisKind::E1InvalidOriginal => "E1",
            DiagnosisKind::E2NonCompilableRecon => "E2",
            DiagnosisKind::E3FunctionalMismatch => "E3",
            DiagnosisKind::E4Inconclusive => "E4",
        }
    }
}

impl fmt::Display for DiagnosisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnosis {
    pub kind: DiagnosisKind,
    pub evidence: String,
    pub counterexamples: Vec<Counterexample>,
}

impl Diagnosis {
    pub fn new(kind: DiagnosisKind, evidence: impl Into<String>) -> Self {
        Self { kind, evidence: evidence.into(), counterexamples: Vec::new() }
    }

    pub fn pass() -> Self {
        Self::new(DiagnosisKind::Pass, "pass")
    }
}

/// Parses every trace attached to a failed check and keeps the earliest
/// divergence per signal.
pub fn extract_counterexamples(outcome: &FecOutcome) -> Result<Vec<Counterexample>, HdlError> {
    let traces: Vec<&PathBuf> = outcome.trace_paths.iter().filter(|p| p.is_file()).collect();
    if traces.is_empty() {
        return Err(HdlError::NoTraceAvailable);
    }
    let mut merged: Vec<Counterexample> = Vec::new();
    for path in traces {
        for cex in counterexamples_from_file(path)? {
            match merged.iter_mut().find(|c| c.signal == cex.signal) {
                Some(existing) if existing.time > cex.time => *existing = cex,
                Some(_) => {}
                None => merged.push(cex),
            }
        }
    }
    merged.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.signal.cmp(&b.signal)));
    Ok(merged)
}

static LOG_HIGHLIGHT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)error|fail|mismatch|differ|could not prove|timed out|timeout").unwrap());

/// Lines of a checker log that explain a failure, capped at `max_lines`.
pub fn log_highlights(log: &str, max_lines: usize) -> String {
    let picked: Vec<&str> = log
        .lines()
        .filter(|l| LOG_HIGHLIGHT.is_match(l))
        .map(str::trim_end)
        .collect();
    let start = picked.len().saturating_sub(max_lines);
    picked[start..].join("\n")
}

/// Last `max_lines` lines of a log.
pub fn log_tail(log: &str, max_lines: usize) -> String {
    let lines: Vec<&str> = log.lines().collect();
    lines[lines.len().saturating_sub(max_lines)..].join("\n")
}

const EVIDENCE_LINES: usize = 40;

/// Total mapping from tool outcomes to a diagnosis.
pub fn classify(original: &CompileResult, recon: &CompileResult, fec: Option<&FecOutcome>) -> Diagnosis {
    if !original.ok {
        return Diagnosis::new(DiagnosisKind::E1InvalidOriginal, original.stderr.clone());
    }
    if !recon.ok {
        return Diagnosis::new(DiagnosisKind::E2NonCompilableRecon, recon.stderr.clone());
    }
    let Some(fec) = fec else {
        return Diagnosis::new(DiagnosisKind::E4Inconclusive, "equivalence check did not run");
    };
    match fec.verdict {
        FecVerdict::Equivalent => Diagnosis::pass(),
        FecVerdict::NotEquivalent => match extract_counterexamples(fec) {
            Ok(cex) if !cex.is_empty() => Diagnosis {
                kind: DiagnosisKind::E3FunctionalMismatch,
                evidence: log_highlights(&fec.raw_log, EVIDENCE_LINES),
                counterexamples: cex,
            },
            Ok(_) => Diagnosis::new(
                DiagnosisKind::E4Inconclusive,
                format!(
                    "checker reported non-equivalence but the trace shows no output divergence\n{}",
                    log_highlights(&fec.raw_log, EVIDENCE_LINES)
                ),
            ),
            Err(_) => {
                let mut evidence = log_highlights(&fec.raw_log, EVIDENCE_LINES);
                if evidence.is_empty() {
                    evidence = log_tail(&fec.raw_log, EVIDENCE_LINES);
                }
                Diagnosis::new(DiagnosisKind::E3FunctionalMismatch, evidence)
            }
        },
        FecVerdict::ToolError if fec.failed_side == Some(DesignSide::Gold) => Diagnosis::new(
            DiagnosisKind::E1InvalidOriginal,
            format!("checker could not load the original design\n{}", log_tail(&fec.raw_log, EVIDENCE_LINES)),
        ),
        FecVerdict::Inconclusive | FecVerdict::ToolError => {
            let mut evidence = log_highlights(&fec.raw_log, EVIDENCE_LINES);
            if evidence.is_empty() {
                evidence = log_tail(&fec.raw_log, EVIDENCE_LINES);
            }
            if evidence.is_empty() {
                evidence = format!("equivalence check ended with {:?}", fec.verdict);
            }
            Diagnosis::new(DiagnosisKind::E4Inconclusive, evidence)
        }
    }
}
