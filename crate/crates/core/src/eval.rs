// SPDX-License-Identifier: Apache-2.0

//! Benchmark ingestion, reconstruction scoring and aggregation.
//!
//! Layouts:
//! - VerilogEval-like: a directory tree with `<id>_ref.sv` and
//!   `<id>_test.sv` per problem. The reference module `RefModule` is renamed
//!   to `TopModule` to form the design under description; the untouched
//!   reference is kept as an auxiliary file for the testbench.
//! - RTLLM-like: one directory per design containing `verified_*.v` and
//!   `testbench.v`. The case id is the directory path relative to the root
//!   with `/` replaced by `.`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ToolConfig;
use crate::hdl::{ports, HdlError, Toolchain};
use crate::llm::{CallLog, CompletionRequest, Gateway};
use crate::loop_engine::{run_batch, FeedbackMode, Status};
use crate::prompting::{PromptBuilder, RTL_END, RTL_START};
use crate::runner::{execute_run, RunEnv};
use crate::spec_model::{extract_marked_block, StructuredSpec};
use crate::store::{atomic_write, RunStore};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DEFAULT_FAILURE_MARKERS: [&str; 3] = ["Mismatch", "Error", "FAIL"];
/// VerilogEval testbenches always print a `Mismatches: N in M samples`
/// line, so only a nonzero count marks failure.
pub const VERILOGEVAL_FAILURE_MARKERS: [&str; 2] = ["Mismatches: [1-9]", "TIMEOUT"];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark at {0} contains no usable problems")]
    EmptyBenchmark(String),
    #[error("benchmark at {0} does not match the declared layout")]
    LayoutUnrecognized(String),
    #[error("runs cover different case sets: {0}")]
    UnevenRuns(String),
    #[error("no results to aggregate")]
    NoResults,
    #[error("simulator not found: {0}")]
    SimulatorNotFound(String),
    #[error("{0}")]
    Io(String),
}

fn io(path: &Path, e: impl std::fmt::Display) -> EvalError {
    EvalError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkFormat {
    VerilogEvalLike,
    RtllmLike,
}

impl BenchmarkFormat {
    pub fn from_key(key: &str) -> Option<Self> {
        match key.to_ascii_lowercase().as_str() {
            "verilogeval" => Some(Self::VerilogEvalLike),
            "rtllm" => Some(Self::RtllmLike),
            _ => None,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::VerilogEvalLike => "verilogeval",
            Self::RtllmLike => "rtllm",
        }
    }

    pub fn default_failure_markers(self) -> Vec<String> {
        let list: &[&str] = match self {
            Self::VerilogEvalLike => &VERILOGEVAL_FAILURE_MARKERS,
            Self::RtllmLike => &DEFAULT_FAILURE_MARKERS,
        };
        list.iter().map(|s| s.to_string()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub case_id: String,
    pub original_rtl: String,
    pub testbench: String,
    /// File name the testbench is written under.
    pub testbench_name: String,
    pub aux_files: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub cases: Vec<BenchmarkCase>,
    pub warnings: Vec<String>,
}

fn walk(root: &Path, out: &mut Vec<PathBuf>) -> Result<(), EvalError> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(root)
        .map_err(|e| io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|e| io(path, e))
}

static REF_MODULE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bRefModule\b").unwrap());

pub fn ingest_benchmark(root: &Path, format: BenchmarkFormat) -> Result<IngestReport, EvalError> {
    if !root.is_dir() {
        return Err(EvalError::LayoutUnrecognized(root.display().to_string()));
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    if files.is_empty() {
        return Err(EvalError::EmptyBenchmark(root.display().to_string()));
    }
    let report = match format {
        BenchmarkFormat::VerilogEvalLike => ingest_verilogeval(&files)?,
        BenchmarkFormat::RtllmLike => ingest_rtllm(root, &files)?,
    };
    let Some(report) = report else {
        return Err(EvalError::LayoutUnrecognized(root.display().to_string()));
    };
    if report.cases.is_empty() {
        return Err(EvalError::EmptyBenchmark(root.display().to_string()));
    }
    let mut seen = BTreeSet::new();
    for c in &report.cases {
        if !seen.insert(&c.case_id) {
            return Err(EvalError::LayoutUnrecognized(format!("duplicate case id `{}`", c.case_id)));
        }
    }
    Ok(report)
}

fn ingest_verilogeval(files: &[PathBuf]) -> Result<Option<IngestReport>, EvalError> {
    let mut cases = Vec::new();
    let mut warnings = Vec::new();
    let mut found = false;
    for path in files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some((id, ext)) = name.strip_suffix("_ref.sv").map(|id| (id, "sv")).or_else(|| name.strip_suffix("_ref.v").map(|id| (id, "v")))
        else {
            continue;
        };
        found = true;
        let tb_path = path.with_file_name(format!("{id}_test.{ext}"));
        if !tb_path.is_file() {
            warnings.push(format!("{id}: missing testbench {}; skipped", tb_path.display()));
            continue;
        }
        let reference = read(path)?;
        let testbench = read(&tb_path)?;
        if reference.trim().is_empty() || testbench.trim().is_empty() {
            warnings.push(format!("{id}: empty reference or testbench; skipped"));
            continue;
        }
        cases.push(BenchmarkCase {
            case_id: id.to_string(),
            original_rtl: REF_MODULE.replace_all(&reference, "TopModule").into_owned(),
            testbench,
            testbench_name: format!("tb.{ext}"),
            aux_files: vec![(format!("ref.{ext}"), reference)],
        });
    }
    Ok(found.then_some(IngestReport { cases, warnings }))
}

fn ingest_rtllm(root: &Path, files: &[PathBuf]) -> Result<Option<IngestReport>, EvalError> {
    let mut cases = Vec::new();
    let mut warnings = Vec::new();
    let mut found = false;
    for path in files {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if !(name.starts_with("verified_") && name.ends_with(".v")) {
            continue;
        }
        found = true;
        let dir = path.parent().unwrap_or(root);
        let rel = dir.strip_prefix(root).unwrap_or(dir);
        let mut id = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join(".");
        if id.is_empty() {
            id = name.trim_start_matches("verified_").trim_end_matches(".v").to_string();
        }
        let tb_path = dir.join("testbench.v");
        if !tb_path.is_file() {
            warnings.push(format!("{id}: missing testbench {}; skipped", tb_path.display()));
            continue;
        }
        let original = read(path)?;
        let testbench = read(&tb_path)?;
        if original.trim().is_empty() || testbench.trim().is_empty() {
            warnings.push(format!("{id}: empty design or testbench; skipped"));
            continue;
        }
        cases.push(BenchmarkCase {
            case_id: id,
            original_rtl: original,
            testbench,
            testbench_name: "testbench.v".into(),
            aux_files: Vec::new(),
        });
    }
    Ok(found.then_some(IngestReport { cases, warnings }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RRResult {
    pub case_id: String,
    pub run_index: u32,
    pub mode: String,
    pub rr: u8,
    /// The spec passed the verifier within budget.
    pub verified: bool,
    pub status: String,
    pub details: String,
}

/// Services for scoring one spec.
pub struct RrContext<'a> {
    pub gateway: &'a Gateway,
    pub log: &'a CallLog,
    pub toolchain: &'a dyn Toolchain,
    pub prompts: &'a PromptBuilder,
    pub model: &'a str,
    pub temperature: f64,
    pub max_tokens: u32,
    pub attempts: u32,
    pub markers: &'a [Regex],
    pub work_root: &'a Path,
    pub lane: &'a str,
}

pub fn compile_markers(patterns: &[String]) -> Result<Vec<Regex>, EvalError> {
    patterns
        .iter()
        .map(|p| Regex::new(p).map_err(|e| EvalError::Io(format!("failure marker `{p}`: {e}"))))
        .collect()
}

/// Outcome of one reconstruct-and-simulate attempt: `Ok(None)` on pass,
/// `Ok(Some(reason))` on failure.
fn rr_attempt(ctx: &RrContext<'_>, case: &BenchmarkCase, spec: &StructuredSpec, n: u32) -> Result<Option<String>, EvalError> {
    let bundle = match ctx.prompts.reconstruction(spec) {
        Ok(b) => b,
        Err(e) => return Ok(Some(format!("reconstruction failed: {e}"))),
    };
    let tag = format!("{}rr_recon_attempt_{n}", ctx.lane);
    let req = CompletionRequest::from_bundle(ctx.model, &bundle, tag).with_sampling(ctx.temperature, ctx.max_tokens);
    let text = match ctx.gateway.complete(&req, ctx.log) {
        Ok(r) => r.text,
        Err(e) => return Ok(Some(format!("reconstruction failed: {e}"))),
    };
    let Some(rtl) = extract_marked_block(&text, RTL_START, RTL_END) else {
        return Ok(Some("reconstruction failed: output lacks RTL markers".into()));
    };
    let work = ctx.work_root.join(format!("rr_{n}"));
    std::fs::create_dir_all(&work).map_err(|e| io(&work, e))?;
    let dut = format!("{}\n", rtl.trim());
    let compiled = match ctx.toolchain.compile(&dut, &work, "dut.v", Some(&spec.module_name)) {
        Ok(c) => c,
        Err(HdlError::Timeout { .. }) => return Ok(Some("compile failed: timeout".into())),
        Err(e) => return Err(EvalError::Io(e.to_string())),
    };
    if !compiled.ok {
        return Ok(Some(format!("compile failed: {}", first_line(&compiled.stderr))));
    }
    let mut sources = Vec::new();
    for (name, text) in &case.aux_files {
        std::fs::write(work.join(name), text).map_err(|e| io(&work, e))?;
        sources.push(name.clone());
    }
    sources.push("dut.v".into());
    std::fs::write(work.join(&case.testbench_name), &case.testbench).map_err(|e| io(&work, e))?;
    sources.push(case.testbench_name.clone());
    let top = ports::top_module_name(&case.testbench).unwrap_or_else(|| "tb".into());
    let sim = match ctx.toolchain.simulate(&work, &sources, &top) {
        Ok(s) => s,
        Err(HdlError::SimulatorNotFound(s)) => return Err(EvalError::SimulatorNotFound(s)),
        Err(e) => return Ok(Some(format!("simulation failed: {e}"))),
    };
    if !sim.build_ok {
        return Ok(Some(format!("testbench build failed: {}", first_line(&sim.stderr))));
    }
    if sim.timed_out {
        return Ok(Some("testbench timed out".into()));
    }
    if sim.exit_code != Some(0) {
        return Ok(Some(format!("testbench exited with {:?}", sim.exit_code)));
    }
    if let Some(line) = sim.stdout.lines().find(|l| ctx.markers.iter().any(|m| m.is_match(l))) {
        return Ok(Some(format!("testbench reported failure: {}", line.trim())));
    }
    Ok(None)
}

fn first_line(s: &str) -> &str {
    s.lines().find(|l| !l.trim().is_empty()).unwrap_or("").trim()
}

/// Reconstruction score of one spec: 1 when RTL rebuilt from the spec alone
/// passes the case testbench.
pub fn compute_rr(
    ctx: &RrContext<'_>,
    case: &BenchmarkCase,
    spec: Option<&StructuredSpec>,
    run_index: u32,
) -> Result<(u8, String), EvalError> {
    let Some(spec) = spec else {
        return Ok((0, "reconstruction failed: no spec".into()));
    };
    let mut last = String::new();
    for n in 1..=ctx.attempts.max(1) {
        match rr_attempt(ctx, case, spec, n)? {
            None => return Ok((1, format!("testbench passed (run {run_index}, attempt {n})"))),
            Some(reason) => last = reason,
        }
    }
    Ok((0, last))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub rr1: u32,
    pub rr0: u32,
}

impl SplitCounts {
    pub fn total(&self) -> u32 {
        self.rr1 + self.rr0
    }

    /// Share of rr=1 in percent, if any results fall in this group.
    pub fn rr1_percent(&self) -> Option<f64> {
        (self.total() > 0).then(|| 100.0 * self.rr1 as f64 / self.total() as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub verified: SplitCounts,
    pub unverified: SplitCounts,
}

impl Split {
    fn add(&mut self, r: &RRResult) {
        let group = if r.verified { &mut self.verified } else { &mut self.unverified };
        if r.rr == 1 {
            group.rr1 += 1;
        } else {
            group.rr0 += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub mean: f64,
    pub std: f64,
    /// Always "population".
    pub std_kind: String,
    pub n_runs: u32,
    pub n_cases: u32,
    pub per_run_means: Vec<f64>,
    /// Tallied over (case, run) pairs.
    pub split: Split,
    pub per_run_split: Vec<Split>,
    pub verified_rr1_percent: Option<f64>,
    pub unverified_rr1_percent: Option<f64>,
    pub warnings: Vec<String>,
}

/// Per-run mean over cases, then mean and population std across runs.
pub fn aggregate(results: &[RRResult], runs: u32) -> Result<AggregateStats, EvalError> {
    if results.is_empty() || runs == 0 {
        return Err(EvalError::NoResults);
    }
    let mut by_run: BTreeMap<u32, BTreeMap<&str, &RRResult>> = BTreeMap::new();
    for r in results {
        if r.run_index < 1 || r.run_index > runs {
            return Err(EvalError::UnevenRuns(format!("run index {} outside 1..={runs}", r.run_index)));
        }
        if by_run.entry(r.run_index).or_default().insert(&r.case_id, r).is_some() {
            return Err(EvalError::UnevenRuns(format!("case `{}` repeated in run {}", r.case_id, r.run_index)));
        }
    }
    if by_run.len() != runs as usize {
        return Err(EvalError::UnevenRuns(format!("{} of {runs} runs have results", by_run.len())));
    }
    let reference: BTreeSet<&str> = by_run.values().next().map(|m| m.keys().copied().collect()).unwrap_or_default();
    let mut per_run_means = Vec::new();
    let mut per_run_split = Vec::new();
    let mut split = Split::default();
    for (run, cases) in &by_run {
        let keys: BTreeSet<&str> = cases.keys().copied().collect();
        if keys != reference {
            return Err(EvalError::UnevenRuns(format!("run {run} covers a different case set")));
        }
        let passed: u32 = cases.values().map(|r| r.rr as u32).sum();
        per_run_means.push(passed as f64 / cases.len() as f64);
        let mut s = Split::default();
        for r in cases.values() {
            s.add(r);
            split.add(r);
        }
        per_run_split.push(s);
    }
    let n = per_run_means.len() as f64;
    let mean = per_run_means.iter().sum::<f64>() / n;
    let std = (per_run_means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n).sqrt();
    let mut warnings = Vec::new();
    if runs == 1 {
        warnings.push("single run: std reported as 0".into());
    }
    Ok(AggregateStats {
        mean,
        std,
        std_kind: "population".into(),
        n_runs: runs,
        n_cases: reference.len() as u32,
        per_run_means,
        split,
        per_run_split,
        verified_rr1_percent: split.verified.rr1_percent(),
        unverified_rr1_percent: split.unverified.rr1_percent(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub std_kind: String,
    pub split_basis: String,
    /// Keyed by mode (`single`, `passfail`, `full`).
    pub methods: BTreeMap<String, AggregateStats>,
}

fn method_order(key: &str) -> usize {
    FeedbackMode::ALL.iter().position(|m| m.key() == key).unwrap_or(usize::MAX)
}

/// Method-by-dataset table of mean ± std.
pub fn format_table(summaries: &[EvalSummary]) -> String {
    let mut methods: Vec<&str> = summaries.iter().flat_map(|s| s.methods.keys().map(String::as_str)).collect();
    methods.sort_by_key(|k| (method_order(k), k.to_string()));
    methods.dedup();
    let name = |k: &str| FeedbackMode::from_key(k).map(|m| m.display_name().to_string()).unwrap_or_else(|| k.to_string());
    let first_w = methods.iter().map(|k| name(k).len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<first_w$}", "Method");
    for s in summaries {
        out.push_str(&format!(" | {:^13}", s.dataset));
    }
    out.push('\n');
    out.push_str(&"-".repeat(first_w));
    for _ in summaries {
        out.push_str(&format!("-+-{}", "-".repeat(13)));
    }
    out.push('\n');
    for k in &methods {
        out.push_str(&format!("{:<first_w$}", name(k)));
        for s in summaries {
            let cell = s.methods.get(*k).map(|a| format!("{:.3} ± {:.3}", a.mean, a.std)).unwrap_or_else(|| "-".into());
            out.push_str(&format!(" | {cell:^13}"));
        }
        out.push('\n');
    }
    out.push_str("(mean ± population std over runs)\n");
    out
}

/// Verified/unverified rr=1 shares, one line per method.
pub fn format_split(summary: &EvalSummary) -> String {
    let mut keys: Vec<&String> = summary.methods.keys().collect();
    keys.sort_by_key(|k| method_order(k));
    let pct = |c: &SplitCounts| match c.rr1_percent() {
        Some(p) => format!("{}/{} ({p:.1}%)", c.rr1, c.total()),
        None => "n/a".into(),
    };
    let mut out = String::new();
    for k in keys {
        let a = &summary.methods[k];
        let name = FeedbackMode::from_key(k).map(|m| m.display_name()).unwrap_or(k);
        out.push_str(&format!(
            "{name}: verified rr=1 {}, unverified rr=1 {} [over case x run]\n",
            pct(&a.split.verified),
            pct(&a.split.unverified)
        ));
    }
    out
}

/// One benchmark sweep over modes and runs.
pub struct EvalPlan {
    pub dataset: String,
    pub modes: Vec<FeedbackMode>,
    pub runs: u32,
    pub failure_markers: Vec<String>,
}

pub fn sanitize_case_id(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect()
}

/// Runs the loop and scores every (mode, run, case), writing per-run
/// directories under `out_dir/runs/`, `results.jsonl` and `summary.json`.
pub fn run_eval(
    env: &RunEnv<'_>,
    config: &ToolConfig,
    cases: &[BenchmarkCase],
    plan: &EvalPlan,
    out_dir: &Path,
) -> Result<(EvalSummary, Vec<RRResult>), EvalError> {
    if plan.runs == 0 {
        return Err(EvalError::NoResults);
    }
    let markers = compile_markers(&plan.failure_markers)?;
    let mut jobs: Vec<(FeedbackMode, u32, &BenchmarkCase)> = Vec::new();
    for &mode in &plan.modes {
        for run in 1..=plan.runs {
            for case in cases {
                jobs.push((mode, run, case));
            }
        }
    }
    let outcomes = run_batch(&jobs, config.workers, |(mode, run, case)| {
        eval_one(env, config, &markers, out_dir, *mode, *run, case)
    })
    .map_err(EvalError::Io)?;
    let mut results = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        results.push(o?);
    }
    results.sort_by(|a, b| {
        (method_order(&a.mode), a.run_index, &a.case_id).cmp(&(method_order(&b.mode), b.run_index, &b.case_id))
    });

    let mut lines = String::new();
    for r in &results {
        lines.push_str(&serde_json::to_string(r).map_err(|e| EvalError::Io(e.to_string()))?);
        lines.push('\n');
    }
    atomic_write(&out_dir.join(RESULTS_FILE), lines.as_bytes()).map_err(|e| EvalError::Io(e.to_string()))?;

    let mut methods = BTreeMap::new();
    for &mode in &plan.modes {
        let subset: Vec<RRResult> = results.iter().filter(|r| r.mode == mode.key()).cloned().collect();
        methods.insert(mode.key().to_string(), aggregate(&subset, plan.runs)?);
    }
    let summary = EvalSummary {
        dataset: plan.dataset.clone(),
        std_kind: "population".into(),
        split_basis: "case x run".into(),
        methods,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| EvalError::Io(e.to_string()))? + "\n";
    atomic_write(&out_dir.join(SUMMARY_FILE), text.as_bytes()).map_err(|e| EvalError::Io(e.to_string()))?;
    Ok((summary, results))
}

fn eval_one(
    env: &RunEnv<'_>,
    config: &ToolConfig,
    markers: &[Regex],
    out_dir: &Path,
    mode: FeedbackMode,
    run: u32,
    case: &BenchmarkCase,
) -> Result<RRResult, EvalError> {
    let safe = sanitize_case_id(&case.case_id);
    let dir = out_dir.join("runs").join(mode.key()).join(&safe).join(format!("run_{run}"));
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| io(&dir, e))?;
    }
    let store = RunStore::at(&dir).map_err(|e| EvalError::Io(e.to_string()))?;
    let lane = format!("{}.{safe}.r{run}/", mode.key());
    let out = execute_run(env, &store, &case.case_id, &case.original_rtl, mode, config, &lane)
        .map_err(|e| EvalError::Io(e.to_string()))?;
    let work = store.work_dir("rr").map_err(|e| EvalError::Io(e.to_string()))?;
    let ctx = RrContext {
        gateway: env.gateway,
        log: &out.log,
        toolchain: env.toolchain,
        prompts: env.prompts,
        model: &config.eval_model,
        temperature: config.temperature,
        max_tokens: config.max_tokens,
        attempts: config.rr_attempts,
        markers,
        work_root: &work,
        lane: &lane,
    };
    let (rr, details) = compute_rr(&ctx, case, out.state.final_spec.as_ref(), run)?;
    Ok(RRResult {
        case_id: case.case_id.clone(),
        run_index: run,
        mode: mode.key().to_string(),
        rr,
        verified: out.state.status == Status::Passed,
        status: format!("{:?}", out.state.status),
        details,
    })
}
