// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use specloop_core::audit::audit_run;
use specloop_core::eval::{format_split, format_table, ingest_benchmark, run_eval, BenchmarkFormat, EvalPlan, EvalSummary};
use specloop_core::llm::{ChatBackend, LiveBackend};
use specloop_core::replay::{load_run, replay_run, ReplayError, ReplayOutcome};
use specloop_core::runner::{execute_run, final_spec_file, prompts_for, RunEnv};
use specloop_core::store::{run_timestamp, RunStore, STATE_FILE};
use specloop_core::{FeedbackMode, Gateway, LoopState, ScriptedBackend, Status, SystemToolchain, Toolchain, ToolConfig, Transcript};

const EXIT_INTERNAL: u8 = 1;
const EXIT_NOT_PASSED: u8 = 2;
const EXIT_NON_VERIFIABLE: u8 = 3;
const EXIT_REPLAY_DIVERGED: u8 = 5;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "specloop", version, about = "Generate RTL specifications refined by formal equivalence feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and verify a spec for one RTL design.
    Run(RunArgs),
    /// Sweep a benchmark and score the specs by reconstruction.
    Eval(EvalArgs),
    /// Re-execute a recorded run and compare its artifacts.
    Replay(ReplayArgs),
    /// Summarize a run directory or an evaluation summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Passfail,
    Single,
}

impl From<ModeArg> for FeedbackMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Full => FeedbackMode::FullDiagnosis,
            ModeArg::Passfail => FeedbackMode::PassFailOnly,
            ModeArg::Single => FeedbackMode::SingleRound,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalModeArg {
    Full,
    Passfail,
    Single,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Verilogeval,
    Rtllm,
}

#[derive(Args)]
struct CommonArgs {
    /// Flat TOML config file (defaults to $SPECLOOP_CONFIG).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay model responses from a transcript instead of calling the API.
    #[arg(long)]
    transcript: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    rtl: PathBuf,
    #[arg(long, value_enum, default_value = "full")]
    mode: ModeArg,
    /// Root directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Case id (defaults to the RTL file stem).
    #[arg(long)]
    case_id: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    benchmark: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
    runs: u32,
    #[arg(long, value_enum, default_value = "all")]
    mode: EvalModeArg,
    #[arg(long, default_value = "eval_out")]
    out: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct ReplayArgs {
    /// Recorded run directory.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ReportArgs {
    /// Run directory to summarize.
    #[arg(long)]
    run: Option<PathBuf>,
    /// summary.json written by `eval`.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ToolConfig> {
    let cfg = ToolConfig::load(path)?;
    eprintln!("specloop configuration:");
    for line in cfg.summary_lines() {
        eprintln!("  {line}");
    }
    Ok(cfg)
}

fn gateway(config: &ToolConfig, transcript: Option<&Path>) -> Result<Gateway> {
    let backend: Arc<dyn ChatBackend> = match transcript {
        Some(p) => {
            let t = Transcript::load(p).with_context(|| format!("loading transcript {}", p.display()))?;
            Arc::new(ScriptedBackend::new(t))
        }
        None => Arc::new(LiveBackend::from_env(config.live_settings())?),
    };
    Ok(if config.llm_rate_per_s > 0.0 {
        Gateway::with_rate_limit(backend, config.llm_rate_per_s, 1)
    } else {
        Gateway::new(backend)
    })
}

fn status_exit(state: &LoopState) -> u8 {
    if state.error.is_some() {
        return EXIT_INTERNAL;
    }
    match state.status {
        Status::Passed => 0,
        Status::NonVerifiable => EXIT_NON_VERIFIABLE,
        Status::BudgetExhausted | Status::GeneratorStopped | Status::Running => EXIT_NOT_PASSED,
    }
}

fn case_id_for(rtl: &Path) -> String {
    let stem = rtl.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "design".into());
    specloop_core::eval::sanitize_case_id(&stem)
}

fn cmd_run(a: RunArgs) -> Result<u8> {
    let config = load_config(a.common.config.as_deref())?;
    let rtl = std::fs::read_to_string(&a.rtl).with_context(|| format!("reading {}", a.rtl.display()))?;
    let gateway = gateway(&config, a.common.transcript.as_deref())?;
    let toolchain = SystemToolchain::new(config.toolchain_settings())?;
    let versions = toolchain.versions();
    let prompts = prompts_for(&config)?;
    let case_id = a.case_id.map(|c| specloop_core::eval::sanitize_case_id(&c)).unwrap_or_else(|| case_id_for(&a.rtl));
    let store = RunStore::create(&a.out, &case_id, &run_timestamp())?;
    let env = RunEnv { gateway: &gateway, toolchain: &toolchain, prompts: &prompts, tool_versions: &versions };
    let out = execute_run(&env, &store, &case_id, &rtl, a.mode.into(), &config, "")?;
    let state = &out.state;
    if let Some(e) = &state.error {
        eprintln!("error: {e}");
    }
    println!("{:?} (round {})", state.status, state.round);
    match final_spec_file(state) {
        Some(f) => println!("spec: {}", store.dir().join(f).display()),
        None => println!("spec: none"),
    }
    println!("run: {}", store.dir().display());
    Ok(status_exit(state))
}

fn cmd_eval(a: EvalArgs) -> Result<u8> {
    let config = load_config(a.common.config.as_deref())?;
    let format = match a.format {
        FormatArg::Verilogeval => BenchmarkFormat::VerilogEvalLike,
        FormatArg::Rtllm => BenchmarkFormat::RtllmLike,
    };
    let ingest = ingest_benchmark(&a.benchmark, format)?;
    for w in &ingest.warnings {
        eprintln!("warning: {w}");
    }
    let modes = match a.mode {
        EvalModeArg::All => FeedbackMode::ALL.to_vec(),
        EvalModeArg::Full => vec![FeedbackMode::FullDiagnosis],
        EvalModeArg::Passfail => vec![FeedbackMode::PassFailOnly],
        EvalModeArg::Single => vec![FeedbackMode::SingleRound],
    };
    let markers =
        if config.failure_markers.is_empty() { format.default_failure_markers() } else { config.failure_markers.clone() };
    let dataset = match format {
        BenchmarkFormat::VerilogEvalLike => "VerilogEval",
        BenchmarkFormat::RtllmLike => "RTLLM",
    };
    let plan = EvalPlan { dataset: dataset.into(), modes, runs: a.runs, failure_markers: markers };
    let gateway = gateway(&config, a.common.transcript.as_deref())?;
    let toolchain = SystemToolchain::new(config.toolchain_settings())?;
    let versions = toolchain.versions();
    let prompts = prompts_for(&config)?;
    std::fs::create_dir_all(&a.out)?;
    let env = RunEnv { gateway: &gateway, toolchain: &toolchain, prompts: &prompts, tool_versions: &versions };
    let (summary, _) = run_eval(&env, &config, &ingest.cases, &plan, &a.out)?;
    print_summary(&summary);
    println!("summary: {}", a.out.join(specloop_core::eval::SUMMARY_FILE).display());
    Ok(0)
}

fn print_summary(summary: &EvalSummary) {
    print!("{}", format_table(std::slice::from_ref(summary)));
    print!("{}", format_split(summary));
    for (mode, stats) in &summary.methods {
        for w in &stats.warnings {
            println!("warning ({mode}): {w}");
        }
    }
}

fn cmd_replay(a: ReplayArgs) -> Result<u8> {
    let (_, config) = match load_run(&a.run) {
        Ok(x) => x,
        Err(e) => bail!(e),
    };
    let toolchain = SystemToolchain::new(config.toolchain_settings())?;
    match replay_run(&a.run, &toolchain) {
        Ok(ReplayOutcome::Identical { artifacts_compared }) => {
            println!("replay identical ({artifacts_compared} artifacts)");
            Ok(0)
        }
        Ok(ReplayOutcome::Diverged { artifact, reason }) => {
            println!("replay diverged at {artifact}: {reason}");
            Ok(EXIT_REPLAY_DIVERGED)
        }
        Err(e @ ReplayError::MissingTranscript(_)) => bail!(e),
        Err(e) => bail!(e),
    }
}

fn cmd_report(a: ReportArgs) -> Result<u8> {
    if let Some(path) = a.summary {
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let summary: EvalSummary = serde_json::from_str(&text)?;
        print_summary(&summary);
        return Ok(0);
    }
    let Some(dir) = a.run else { bail!("--run or --summary is required") };
    let record = RunStore::read_record(&dir)?;
    let state: LoopState = serde_json::from_str(&std::fs::read_to_string(dir.join(STATE_FILE))?)?;
    println!("case: {}", record.case_id);
    println!("mode: {}", record.mode);
    println!("status: {:?} (round {})", state.status, state.round);
    for r in &state.history {
        let outcome = match (&r.generation_error, &r.verification) {
            (Some(e), _) => format!("unparsable spec: {e}"),
            (None, Some(v)) => format!(
                "{} after {} reconstruction(s), {} equivalence run(s)",
                v.diagnosis.kind, v.recon_attempts, v.fec_runs
            ),
            (None, None) => "not verified".into(),
        };
        println!("  round {}: {outcome}", r.round);
    }
    if let Some(e) = &state.error {
        println!("error: {e}");
    }
    let audit = audit_run(&dir)?;
    println!(
        "information-hiding audit: {} reconstructor prompt(s), {} violation(s)",
        audit.prompts_checked,
        audit.violations.len()
    );
    Ok(0)
}
