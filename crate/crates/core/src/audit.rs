// SPDX-License-Identifier: Apache-2.0

//! Information-hiding audit over recorded model calls.
//!
//! Every reconstructor-bound prompt is checked for two kinds of leak:
//! any `WINDOW`-character run of the original RTL (after collapsing
//! whitespace), and any equivalence-checker log line. The reconstructor's
//! own previous RTL and its compile output inside a compile-fix prompt are
//! exempt, since they come from the reconstructor itself.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::llm::{read_call_log, CallRecord, LlmError, CALL_LOG_FILE};
use crate::prompting::{PromptPurpose, COMPILER_LOG_END, COMPILER_LOG_START, RTL_END, RTL_START};
use crate::spec_model::extract_marked_block;
use crate::store::ORIGINAL_FILE;

pub const WINDOW: usize = 20;
/// Checker log lines shorter than this are too generic to count.
pub const MIN_LOG_LINE: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeakKind {
    OriginalRtl { window: String },
    CheckerLog { line: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditViolation {
    pub seq: u64,
    pub tag: String,
    pub leak: LeakKind,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub prompts_checked: usize,
    pub violations: Vec<AuditViolation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Distinct whitespace-collapsed windows of `text`.
fn windows(text: &str, n: usize) -> BTreeSet<String> {
    let chars: Vec<char> = collapse_ws(text).chars().collect();
    if chars.len() < n {
        return BTreeSet::new();
    }
    (0..=chars.len() - n).map(|i| chars[i..i + n].iter().collect()).collect()
}

/// Region between the last `start`/`end` pair, with the byte range of the
/// whole marked block.
fn marked_region<'a>(text: &'a str, start: &str, end: &str) -> Option<(&'a str, std::ops::Range<usize>)> {
    let inner = extract_marked_block(text, start, end)?;
    let offset = inner.as_ptr() as usize - text.as_ptr() as usize;
    let begin = offset.saturating_sub(start.len());
    let finish = (offset + inner.len() + end.len()).min(text.len());
    Some((inner, begin..finish))
}

fn remove_range(text: &str, r: std::ops::Range<usize>) -> String {
    format!("{}{}", &text[..r.start], &text[r.end..])
}

/// Audits `records` against the original design and checker logs.
pub fn audit_records(records: &[CallRecord], original_rtl: &str, checker_logs: &[String]) -> AuditReport {
    let rtl_windows = windows(original_rtl, WINDOW);
    let log_lines: BTreeSet<String> = checker_logs
        .iter()
        .flat_map(|l| l.lines())
        .map(str::trim)
        .filter(|l| l.chars().count() >= MIN_LOG_LINE)
        .map(str::to_string)
        .collect();
    let mut own_rtl: Vec<String> = Vec::new();
    let mut report = AuditReport::default();

    for rec in records {
        let Some(purpose) = rec.purpose else { continue };
        if !purpose.is_reconstructor_bound() {
            continue;
        }
        report.prompts_checked += 1;
        for msg in &rec.messages {
            let mut text = msg.content.clone();
            let mut stderr = String::new();
            if purpose == PromptPurpose::CompileFix {
                if let Some((bad, range)) = marked_region(&text, RTL_START, RTL_END) {
                    let bad = bad.trim().to_string();
                    if own_rtl.contains(&bad) {
                        text = remove_range(&text, range);
                    }
                }
                if let Some((log, range)) = marked_region(&text, COMPILER_LOG_START, COMPILER_LOG_END) {
                    stderr = log.to_string();
                    text = remove_range(&text, range);
                }
            }
            let prompt_collapsed = collapse_ws(&text);
            for w in &rtl_windows {
                if prompt_collapsed.contains(w.as_str()) {
                    report.violations.push(AuditViolation {
                        seq: rec.seq,
                        tag: rec.tag.clone(),
                        leak: LeakKind::OriginalRtl { window: w.clone() },
                    });
                    break;
                }
            }
            // Compile output may quote the reconstructor's own code, which
            // can coincide with the original.
            let stderr_collapsed = collapse_ws(&stderr);
            for w in &rtl_windows {
                if stderr_collapsed.contains(w.as_str()) && !own_rtl.iter().any(|r| collapse_ws(r).contains(w.as_str())) {
                    report.violations.push(AuditViolation {
                        seq: rec.seq,
                        tag: rec.tag.clone(),
                        leak: LeakKind::OriginalRtl { window: w.clone() },
                    });
                    break;
                }
            }
            for line in &log_lines {
                if text.contains(line.as_str()) {
                    report.violations.push(AuditViolation {
                        seq: rec.seq,
                        tag: rec.tag.clone(),
                        leak: LeakKind::CheckerLog { line: line.clone() },
                    });
                    break;
                }
            }
        }
        if let Some(resp) = &rec.response {
            if let Some(rtl) = extract_marked_block(resp, RTL_START, RTL_END) {
                own_rtl.push(rtl.trim().to_string());
            }
        }
    }
    report
}

/// Audits a run directory: its call log, `original.v`, every `fec_*.log`
/// and the log sections of every report.
pub fn audit_run(run_dir: &Path) -> Result<AuditReport, LlmError> {
    let records = read_call_log(&run_dir.join(CALL_LOG_FILE))?;
    let original = std::fs::read_to_string(run_dir.join(ORIGINAL_FILE)).unwrap_or_default();
    let mut logs = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(run_dir)
        .map_err(|e| LlmError::Io(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    names.sort();
    for p in names {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        if name.starts_with("fec_") && name.ends_with(".log") {
            logs.push(std::fs::read_to_string(&p).map_err(|e| LlmError::Io(e.to_string()))?);
        } else if name.starts_with("report_round_") {
            let text = std::fs::read_to_string(&p).map_err(|e| LlmError::Io(e.to_string()))?;
            if let Some((_, log)) = text.split_once(crate::prompting::TOOL_LOG_HEADER) {
                logs.push(log.to_string());
            }
        }
    }
    Ok(audit_records(&records, &original, &logs))
}
