// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use super::process::{self, ProcessOutput};
use super::{CompileResult, DesignSide, FecOutcome, FecVerdict, HdlError};

/// Resolves a Yosys command: an explicit setting, then `YOSYS_CMD`, then
/// `yosys` or `yowasp-yosys` on `PATH`.
pub fn resolve_yosys(configured: Option<&str>) -> Result<Vec<String>, HdlError> {
    if let Some(cmd) = configured.filter(|c| !c.trim().is_empty() && *c != "auto") {
        return checked_argv(cmd);
    }
    if let Ok(cmd) = std::env::var("YOSYS_CMD") {
        if !cmd.trim().is_empty() {
            return checked_argv(&cmd);
        }
    }
    for candidate in ["yosys", "yowasp-yosys"] {
        if which::which(candidate).is_ok() {
            return Ok(vec![candidate.to_string()]);
        }
    }
    Err(HdlError::ToolNotFound("yosys (set YOSYS_CMD or install yosys / yowasp-yosys)".into()))
}

fn split_cmd(cmd: &str) -> Result<Vec<String>, HdlError> {
    match shlex::split(cmd) {
        Some(argv) if !argv.is_empty() => Ok(argv),
        _ => Err(HdlError::InvalidConfig(format!("cannot parse command `{cmd}`"))),
    }
}

fn checked_argv(cmd: &str) -> Result<Vec<String>, HdlError> {
    let argv = split_cmd(cmd)?;
    which::which(&argv[0]).map_err(|_| HdlError::ToolNotFound(argv[0].clone()))?;
    Ok(argv)
}

fn program_name(argv: &[String]) -> String {
    Path::new(&argv[0])
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| argv[0].clone())
}

fn launch(argv: &[String], cwd: &Path, timeout: Duration) -> Result<ProcessOutput, HdlError> {
    process::run(argv, cwd, timeout).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => HdlError::ToolNotFound(argv[0].clone()),
        _ => HdlError::Io(format!("{}: {e}", argv[0])),
    })
}

fn with_args(base: &[String], extra: &[&str]) -> Vec<String> {
    base.iter().cloned().chain(extra.iter().map(|s| s.to_string())).collect()
}

/// Expands `{name}` placeholders in each template argument; an argument
/// that is exactly `{sources}` expands to one argument per source.
fn expand_template(template: &str, src: &[String], top: &str) -> Result<Vec<String>, HdlError> {
    let mut argv = Vec::new();
    for arg in split_cmd(template)? {
        match arg.as_str() {
            "{sources}" | "{src}" => argv.extend(src.iter().cloned()),
            _ => argv.push(arg.replace("{src}", &src.join(" ")).replace("{top}", top)),
        }
    }
    Ok(argv)
}

fn file_stem(file_name: &str) -> &str {
    Path::new(file_name).file_stem().and_then(|s| s.to_str()).unwrap_or("design")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompilerProfile {
    Yosys(Vec<String>),
    Iverilog(Vec<String>),
    /// Command template using `{src}` and `{top}`.
    Custom(String),
}

impl CompilerProfile {
    /// `auto`, a known tool command, or a template containing `{src}`.
    pub fn resolve(setting: &str) -> Result<Self, HdlError> {
        let setting = setting.trim();
        if setting.is_empty() || setting == "auto" {
            if let Ok(argv) = resolve_yosys(None) {
                return Ok(Self::Yosys(argv));
            }
            if which::which("iverilog").is_ok() {
                return Ok(Self::Iverilog(vec!["iverilog".into()]));
            }
            return Err(HdlError::ToolNotFound("no Verilog compiler (yosys, yowasp-yosys, iverilog)".into()));
        }
        if setting.contains("{src}") {
            return Ok(Self::Custom(setting.to_string()));
        }
        let argv = checked_argv(setting)?;
        let name = program_name(&argv);
        if name.contains("iverilog") {
            Ok(Self::Iverilog(argv))
        } else if name.contains("yosys") {
            Ok(Self::Yosys(argv))
        } else {
            Err(HdlError::InvalidConfig(format!(
                "unknown compiler `{name}`; use a command template containing {{src}}"
            )))
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Yosys(a) | Self::Iverilog(a) => program_name(a),
            Self::Custom(t) => t.split_whitespace().next().unwrap_or("custom").to_string(),
        }
    }

    /// Compiles `file_name` (relative to `work_dir`). On success the
    /// elaborated artifact `<stem>.il` or `<stem>.vvp` exists.
    pub fn check_file(
        &self,
        work_dir: &Path,
        file_name: &str,
        top: Option<&str>,
        timeout: Duration,
    ) -> Result<CompileResult, HdlError> {
        let stem = file_stem(file_name);
        let (argv, artifact) = match self {
            Self::Yosys(base) => {
                let hierarchy = match top {
                    Some(t) => format!("hierarchy -check -top {t}"),
                    None => "hierarchy -check -auto-top".into(),
                };
                let script = format!("read_verilog -sv {file_name}; {hierarchy}; proc; write_rtlil {stem}.il");
                (with_args(base, &["-q", "-p", &script]), Some(format!("{stem}.il")))
            }
            Self::Iverilog(base) => {
                let out = format!("{stem}.vvp");
                let mut argv = with_args(base, &["-g2012", "-o", &out]);
                if let Some(t) = top {
                    argv.extend(["-s".into(), t.to_string()]);
                }
                argv.push(file_name.to_string());
                (argv, Some(out))
            }
            Self::Custom(template) => (expand_template(template, &[file_name.to_string()], top.unwrap_or(""))?, None),
        };
        if let Some(a) = &artifact {
            let _ = std::fs::remove_file(work_dir.join(a));
        }
        let out = launch(&argv, work_dir, timeout)?;
        if out.timed_out {
            return Err(HdlError::Timeout { tool: self.name(), seconds: timeout.as_secs() });
        }
        let produced = artifact.as_ref().is_none_or(|a| work_dir.join(a).is_file());
        let ok = out.success() && produced;
        let mut stderr = out.stderr.trim_end().to_string();
        if !ok && stderr.is_empty() {
            stderr = out.combined().trim_end().to_string();
        }
        if !ok && stderr.is_empty() {
            stderr = format!("{} exited with status {:?}", self.name(), out.status);
        }
        Ok(CompileResult { ok, stderr, tool: self.name(), duration_ms: out.duration_ms })
    }

    pub fn check(
        &self,
        rtl: &str,
        work_dir: &Path,
        file_name: &str,
        top: Option<&str>,
        timeout: Duration,
    ) -> Result<CompileResult, HdlError> {
        std::fs::create_dir_all(work_dir).map_err(|e| HdlError::Io(e.to_string()))?;
        std::fs::write(work_dir.join(file_name), rtl).map_err(|e| HdlError::Io(e.to_string()))?;
        self.check_file(work_dir, file_name, top, timeout)
    }
}

/// Writes `rtl` to `work_dir/design.v` and compiles it with the default
/// compiler and a 60 s timeout.
pub fn compile_check(rtl: &str, work_dir: &Path) -> Result<CompileResult, HdlError> {
    CompilerProfile::resolve("auto")?.check(rtl, work_dir, "design.v", None, Duration::from_secs(60))
}

/// Parsed equivalence-checker configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqyConfig {
    pub gold_script: Vec<String>,
    pub gate_script: Vec<String>,
    pub depth: u32,
}

impl EqyConfig {
    pub fn render(&self) -> String {
        let mut out = String::from("[gold]\n");
        for l in &self.gold_script {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str("\n[gate]\n");
        for l in &self.gate_script {
            out.push_str(l);
            out.push('\n');
        }
        out.push_str(&format!("\n[strategy sat]\nuse sat\ndepth {}\n", self.depth));
        out
    }

    /// `-top` argument of a side's script.
    pub fn top_of(script: &[String]) -> Option<String> {
        script.iter().find_map(|l| {
            let mut words = l.split_whitespace();
            while let Some(w) = words.next() {
                if w == "-top" {
                    return words.next().map(str::to_string);
                }
            }
            None
        })
    }
}

pub fn parse_eqy_config(text: &str) -> Result<EqyConfig, HdlError> {
    let mut section = String::new();
    let mut gold = Vec::new();
    let mut gate = Vec::new();
    let mut depth = None;
    for line in text.lines() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.starts_with('[') && t.ends_with(']') {
            section = t[1..t.len() - 1].trim().to_string();
            continue;
        }
        match section.as_str() {
            "gold" => gold.push(t.to_string()),
            "gate" => gate.push(t.to_string()),
            s if s.starts_with("strategy") => {
                if let Some(d) = t.strip_prefix("depth") {
                    depth = Some(d.trim().parse::<u32>().map_err(|_| {
                        HdlError::InvalidConfig(format!("bad depth `{}`", d.trim()))
                    })?);
                }
            }
            _ => {}
        }
    }
    if gold.is_empty() || gate.is_empty() {
        return Err(HdlError::InvalidConfig("config needs [gold] and [gate] scripts".into()));
    }
    let depth = depth.ok_or_else(|| HdlError::InvalidConfig("strategy depth missing".into()))?;
    if depth == 0 {
        return Err(HdlError::InvalidConfig("depth must be at least 1".into()));
    }
    Ok(EqyConfig { gold_script: gold, gate_script: gate, depth })
}

/// Config comparing `gold_path` against `gate_path` with a SAT strategy of
/// the given depth. When both files share a directory the config names
/// them relative to it, and the checker must run in that directory.
pub fn generate_eqy_config(gold_path: &Path, gate_path: &Path, top_module: &str, depth: u32) -> Result<String, HdlError> {
    for p in [gold_path, gate_path] {
        if !p.is_file() {
            return Err(HdlError::MissingFile(p.display().to_string()));
        }
    }
    if depth == 0 {
        return Err(HdlError::InvalidConfig("depth must be at least 1".into()));
    }
    let shared_dir = gold_path.parent() == gate_path.parent();
    let name = |p: &Path| -> String {
        match (shared_dir, p.file_name()) {
            (true, Some(n)) => n.to_string_lossy().into_owned(),
            _ => p.display().to_string(),
        }
    };
    let side = |p: &Path| vec![format!("read_verilog -sv {}", name(p)), format!("prep -top {top_module}")];
    Ok(EqyConfig { gold_script: side(gold_path), gate_script: side(gate_path), depth }.render())
}

const NOT_EQUIVALENT_MARKERS: &[&str] = &["Failed to prove equivalence", "model found: FAIL!", "proof did fail"];
const EQUIVALENT_MARKERS: &[&str] = &["Successfully proved designs equivalent", "no model found: SUCCESS!"];
const INCONCLUSIVE_MARKERS: &[&str] = &["Could not prove equivalence", "status: UNKNOWN"];

/// Verdict from exit status, timeout and log markers. Any failing
/// partition makes the whole design non-equivalent.
pub fn interpret_fec_log(exit: Option<i32>, timed_out: bool, log: &str) -> FecVerdict {
    let has = |markers: &[&str]| markers.iter().any(|m| log.contains(m));
    if timed_out {
        FecVerdict::Inconclusive
    } else if has(NOT_EQUIVALENT_MARKERS) {
        FecVerdict::NotEquivalent
    } else if exit == Some(0) && has(EQUIVALENT_MARKERS) {
        FecVerdict::Equivalent
    } else if has(INCONCLUSIVE_MARKERS) || exit == Some(0) {
        FecVerdict::Inconclusive
    } else {
        FecVerdict::ToolError
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FecProfile {
    /// External EQY front end.
    Eqy(Vec<String>),
    /// EQY-config-compatible runner driving Yosys `sat` on a miter.
    Builtin(Vec<String>),
}

pub const EQY_CONFIG_FILE: &str = "check.eqy";
pub const TRACE_FILE: &str = "trace.vcd";

impl FecProfile {
    /// `auto` prefers `eqy` on `PATH` and falls back to the builtin runner.
    pub fn resolve(setting: &str, yosys: Option<&str>) -> Result<Self, HdlError> {
        let setting = setting.trim();
        match setting {
            "" | "auto" => match which::which("eqy") {
                Ok(_) => Ok(Self::Eqy(vec!["eqy".into()])),
                Err(_) => Ok(Self::Builtin(resolve_yosys(yosys)?)),
            },
            "builtin" => Ok(Self::Builtin(resolve_yosys(yosys)?)),
            _ => {
                let argv = checked_argv(setting)?;
                let name = program_name(&argv);
                if name.contains("eqy") {
                    Ok(Self::Eqy(argv))
                } else if name.contains("yosys") {
                    Ok(Self::Builtin(argv))
                } else {
                    Err(HdlError::InvalidConfig(format!("unknown equivalence checker `{name}`")))
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Eqy(a) => program_name(a),
            Self::Builtin(a) => format!("builtin-sat({})", program_name(a)),
        }
    }

    pub fn run(&self, config: &str, work_dir: &Path, timeout: Duration) -> Result<FecOutcome, HdlError> {
        std::fs::write(work_dir.join(EQY_CONFIG_FILE), config).map_err(|e| HdlError::Io(e.to_string()))?;
        match self {
            Self::Eqy(argv) => run_eqy(argv, work_dir, timeout),
            Self::Builtin(yosys) => run_builtin(yosys, config, work_dir, timeout),
        }
    }
}

fn collect_vcds(dir: &Path, out: &mut Vec<PathBuf>) {
    let Ok(entries) = std::fs::read_dir(dir) else { return };
    let mut entries: Vec<_> = entries.flatten().map(|e| e.path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_vcds(&p, out);
        } else if p.extension().is_some_and(|e| e == "vcd") {
            out.push(p);
        }
    }
}

fn run_eqy(argv: &[String], work_dir: &Path, timeout: Duration) -> Result<FecOutcome, HdlError> {
    let out = launch(&with_args(argv, &["-f", "-d", "eqy_out", EQY_CONFIG_FILE]), work_dir, timeout)?;
    let mut log = out.combined();
    if let Ok(file_log) = std::fs::read_to_string(work_dir.join("eqy_out").join("logfile.txt")) {
        log.push_str(&file_log);
    }
    let verdict = interpret_fec_log(out.status, out.timed_out, &log);
    let mut traces = Vec::new();
    if verdict == FecVerdict::NotEquivalent {
        collect_vcds(&work_dir.join("eqy_out"), &mut traces);
    }
    Ok(FecOutcome { verdict, raw_log: log, trace_paths: traces, duration_ms: out.duration_ms, failed_side: None })
}

fn run_builtin(yosys: &[String], config: &str, work_dir: &Path, timeout: Duration) -> Result<FecOutcome, HdlError> {
    let start = Instant::now();
    let cfg = match parse_eqy_config(config) {
        Ok(c) => c,
        Err(e) => {
            return Ok(FecOutcome {
                verdict: FecVerdict::ToolError,
                raw_log: e.to_string(),
                trace_paths: vec![],
                duration_ms: 0,
                failed_side: None,
            })
        }
    };
    for stale in ["gold.il", "gate.il", TRACE_FILE] {
        let _ = std::fs::remove_file(work_dir.join(stale));
    }
    let side_script = |lines: &[String], name: &str| {
        let mut s: Vec<String> = lines.to_vec();
        s.push("flatten".into());
        s.push(match EqyConfig::top_of(lines) {
            Some(t) => format!("hierarchy -top {t}"),
            None => "hierarchy -auto-top".into(),
        });
        s.extend(["memory_map".into(), "opt_clean".into(), format!("rename -top {name}"), format!("write_rtlil {name}.il")]);
        s.join("\n") + "\n"
    };
    let miter = format!(
        "read_rtlil gold.il\nread_rtlil gate.il\nasync2sync\n\
         miter -equiv -flatten -make_outputs -ignore_gold_x gold gate miter\n\
         hierarchy -top miter\n\
         sat -verify -prove trigger 0 -set-init-zero -seq {} -show-inputs -show-outputs -dump_vcd {TRACE_FILE} miter\n",
        cfg.depth
    );
    let phases = [
        ("gold", side_script(&cfg.gold_script, "gold"), Some(DesignSide::Gold)),
        ("gate", side_script(&cfg.gate_script, "gate"), Some(DesignSide::Gate)),
        ("miter", miter, None),
    ];
    let mut log = String::new();
    for (name, script, side) in phases {
        let file = format!("fec_{name}.ys");
        std::fs::write(work_dir.join(&file), &script).map_err(|e| HdlError::Io(e.to_string()))?;
        let left = timeout.saturating_sub(start.elapsed());
        let out = launch(&with_args(yosys, &["-Q", "-T", "-s", &file]), work_dir, left)?;
        log.push_str(&format!("### {name}\n"));
        log.push_str(&out.combined());
        if !log.ends_with('\n') {
            log.push('\n');
        }
        let finish = |verdict, failed_side, log: String, traces| FecOutcome {
            verdict,
            raw_log: log,
            trace_paths: traces,
            duration_ms: start.elapsed().as_millis() as u64,
            failed_side,
        };
        if out.timed_out {
            log.push_str(&format!("timed out after {} s\n", timeout.as_secs()));
            return Ok(finish(FecVerdict::Inconclusive, None, log, vec![]));
        }
        if let Some(side) = side {
            if !out.success() {
                return Ok(finish(FecVerdict::ToolError, Some(side), log, vec![]));
            }
            continue;
        }
        let verdict = interpret_fec_log(out.status, false, &log);
        let trace = work_dir.join(TRACE_FILE);
        let traces = if verdict == FecVerdict::NotEquivalent && trace.is_file() { vec![trace] } else { vec![] };
        return Ok(finish(verdict, None, log, traces));
    }
    unreachable!("miter phase always returns")
}

/// Runs a generated config in `work_dir` with the default checker.
pub fn run_equivalence(config: &str, work_dir: &Path, timeout_s: u64) -> Result<FecOutcome, HdlError> {
    FecProfile::resolve("auto", None)?.run(config, work_dir, Duration::from_secs(timeout_s))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimulatorProfile {
    /// `iverilog` compile followed by `vvp`.
    Iverilog { compiler: Vec<String>, runtime: Vec<String> },
    Verilator(Vec<String>),
    /// Command template using `{sources}` and `{top}`.
    Custom(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOutcome {
    pub build_ok: bool,
    pub exit_code: Option<i32>,
    pub stdout: String,
    pub stderr: String,
    pub timed_out: bool,
    pub duration_ms: u64,
}

impl SimOutcome {
    fn from_build_failure(out: &ProcessOutput) -> Self {
        Self {
            build_ok: false,
            exit_code: out.status,
            stdout: out.stdout.clone(),
            stderr: out.stderr.clone(),
            timed_out: out.timed_out,
            duration_ms: out.duration_ms,
        }
    }
}

impl SimulatorProfile {
    pub fn resolve(setting: &str) -> Result<Self, HdlError> {
        let setting = setting.trim();
        if setting.is_empty() || setting == "auto" {
            if which::which("iverilog").is_ok() && which::which("vvp").is_ok() {
                return Ok(Self::Iverilog { compiler: vec!["iverilog".into()], runtime: vec!["vvp".into()] });
            }
            for v in ["verilator", "verilator-cli"] {
                if which::which(v).is_ok() {
                    return Ok(Self::Verilator(vec![v.into()]));
                }
            }
            return Err(HdlError::SimulatorNotFound("no simulator (iverilog+vvp, verilator)".into()));
        }
        if setting.contains("{sources}") || setting.contains("{src}") {
            return Ok(Self::Custom(setting.into()));
        }
        let argv = split_cmd(setting)?;
        which::which(&argv[0]).map_err(|_| HdlError::SimulatorNotFound(argv[0].clone()))?;
        let name = program_name(&argv);
        if name.contains("iverilog") {
            Ok(Self::Iverilog { compiler: argv, runtime: vec!["vvp".into()] })
        } else if name.contains("verilator") {
            Ok(Self::Verilator(argv))
        } else {
            Err(HdlError::InvalidConfig(format!("unknown simulator `{name}`")))
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::Iverilog { compiler, .. } => program_name(compiler),
            Self::Verilator(a) => program_name(a),
            Self::Custom(t) => t.split_whitespace().next().unwrap_or("custom").to_string(),
        }
    }

    /// Builds and runs `sources` (relative to `work_dir`) with `top` as the
    /// testbench root.
    pub fn run(&self, work_dir: &Path, sources: &[String], top: &str, timeout: Duration) -> Result<SimOutcome, HdlError> {
        let start = Instant::now();
        let (build, run_argv): (Option<Vec<String>>, Vec<String>) = match self {
            Self::Iverilog { compiler, runtime } => {
                let mut b = with_args(compiler, &["-g2012", "-o", "sim.vvp", "-s", top]);
                b.extend(sources.iter().cloned());
                (Some(b), with_args(runtime, &["-n", "sim.vvp"]))
            }
            Self::Verilator(base) => {
                let mut b = with_args(
                    base,
                    &["--binary", "--timing", "-Wno-fatal", "-MAKEFLAGS", "PYTHON3=python3", "-Mdir", "obj_sim", "--top-module", top],
                );
                b.extend(sources.iter().cloned());
                (Some(b), vec![format!("./obj_sim/V{top}")])
            }
            Self::Custom(t) => (None, expand_template(t, sources, top)?),
        };
        if let Some(b) = build {
            let out = process::run(&b, work_dir, timeout).map_err(|e| HdlError::SimulatorNotFound(format!("{}: {e}", b[0])))?;
            if !out.success() {
                return Ok(SimOutcome::from_build_failure(&out));
            }
        }
        let left = timeout.saturating_sub(start.elapsed());
        let out = launch(&run_argv, work_dir, left)?;
        Ok(SimOutcome {
            build_ok: true,
            exit_code: out.status,
            stdout: out.stdout,
            stderr: out.stderr,
            timed_out: out.timed_out,
            duration_ms: start.elapsed().as_millis() as u64,
        })
    }
}

/// Tool access used by the verifier and the evaluation harness. Tests
/// substitute fakes.
pub trait Toolchain: Send + Sync {
    /// Writes `rtl` to `work_dir/file_name` and compiles it.
    fn compile(&self, rtl: &str, work_dir: &Path, file_name: &str, top: Option<&str>) -> Result<CompileResult, HdlError>;

    /// Checks `gate_file` against `gold_file`, both in `work_dir`.
    fn equivalence(&self, work_dir: &Path, gold_file: &str, gate_file: &str, top: &str) -> Result<FecOutcome, HdlError>;

    fn simulate(&self, work_dir: &Path, sources: &[String], top: &str) -> Result<SimOutcome, HdlError>;

    /// Tool name to version string.
    fn versions(&self) -> BTreeMap<String, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToolchainSettings {
    pub compiler_cmd: String,
    pub fec_cmd: String,
    pub simulator_cmd: String,
    pub fec_depth: u32,
    pub compile_timeout_s: u64,
    pub fec_timeout_s: u64,
    pub sim_timeout_s: u64,
}

impl Default for ToolchainSettings {
    fn default() -> Self {
        Self {
            compiler_cmd: "auto".into(),
            fec_cmd: "auto".into(),
            simulator_cmd: "auto".into(),
            fec_depth: 10,
            compile_timeout_s: 60,
            fec_timeout_s: 600,
            sim_timeout_s: 120,
        }
    }
}

#[derive(Debug)]
pub struct SystemToolchain {
    pub compiler: CompilerProfile,
    pub fec: FecProfile,
    simulator: Result<SimulatorProfile, HdlError>,
    settings: ToolchainSettings,
}

impl SystemToolchain {
    /// Resolves the compiler and checker eagerly; a missing simulator is
    /// reported only when simulation is requested.
    pub fn new(settings: ToolchainSettings) -> Result<Self, HdlError> {
        if settings.fec_depth == 0 {
            return Err(HdlError::InvalidConfig("fec_depth must be at least 1".into()));
        }
        let compiler = CompilerProfile::resolve(&settings.compiler_cmd)?;
        let yosys_hint = match &compiler {
            CompilerProfile::Yosys(a) => Some(a.join(" ")),
            _ => None,
        };
        let fec = FecProfile::resolve(&settings.fec_cmd, yosys_hint.as_deref())?;
        let simulator = SimulatorProfile::resolve(&settings.simulator_cmd);
        Ok(Self { compiler, fec, simulator, settings })
    }

    pub fn settings(&self) -> &ToolchainSettings {
        &self.settings
    }
}

fn first_line_of(argv: &[String]) -> Option<String> {
    let out = process::run(argv, Path::new("."), Duration::from_secs(30)).ok()?;
    out.combined().lines().map(str::trim).find(|l| !l.is_empty()).map(str::to_string)
}

impl Toolchain for SystemToolchain {
    fn compile(&self, rtl: &str, work_dir: &Path, file_name: &str, top: Option<&str>) -> Result<CompileResult, HdlError> {
        self.compiler
            .check(rtl, work_dir, file_name, top, Duration::from_secs(self.settings.compile_timeout_s))
    }

    fn equivalence(&self, work_dir: &Path, gold_file: &str, gate_file: &str, top: &str) -> Result<FecOutcome, HdlError> {
        let config = generate_eqy_config(&work_dir.join(gold_file), &work_dir.join(gate_file), top, self.settings.fec_depth)?;
        self.fec.run(&config, work_dir, Duration::from_secs(self.settings.fec_timeout_s))
    }

    fn simulate(&self, work_dir: &Path, sources: &[String], top: &str) -> Result<SimOutcome, HdlError> {
        let sim = self.simulator.as_ref().map_err(Clone::clone)?;
        sim.run(work_dir, sources, top, Duration::from_secs(self.settings.sim_timeout_s))
    }

    fn versions(&self) -> BTreeMap<String, String> {
        let mut probes: Vec<(String, Vec<String>)> = Vec::new();
        let mut fixed: Vec<(String, String)> = Vec::new();
        match &self.compiler {
            CompilerProfile::Yosys(a) | CompilerProfile::Iverilog(a) => probes.push((program_name(a), with_args(a, &["-V"]))),
            CompilerProfile::Custom(t) => fixed.push(("compiler".into(), t.clone())),
        }
        match &self.fec {
            FecProfile::Eqy(a) => probes.push((program_name(a), with_args(a, &["--version"]))),
            FecProfile::Builtin(a) => probes.push((format!("fec:{}", program_name(a)), with_args(a, &["-V"]))),
        }
        match &self.simulator {
            Ok(SimulatorProfile::Iverilog { compiler, .. }) => probes.push(("simulator".into(), with_args(compiler, &["-V"]))),
            Ok(SimulatorProfile::Verilator(a)) => probes.push(("simulator".into(), with_args(a, &["--version"]))),
            Ok(SimulatorProfile::Custom(t)) => fixed.push(("simulator".into(), t.clone())),
            Err(_) => fixed.push(("simulator".into(), "unavailable".into())),
        }
        let mut v: BTreeMap<String, String> = fixed.into_iter().collect();
        for (label, argv) in probes {
            v.insert(label, first_line_of(&argv).unwrap_or_else(|| "unknown".into()));
        }
        v
    }
}
