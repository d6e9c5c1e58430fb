// SPDX-License-Identifier: Apache-2.0

//! Test doubles shared by integration tests: a toolchain steered by markers
//! embedded in the RTL, and canned model outputs.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, Ordering};

use specloop_core::hdl::{CompileResult, HdlError, SimOutcome};
use specloop_core::{FecOutcome, FecVerdict, PortDesc, StructuredSpec, Toolchain};

/// Original RTL containing this marker fails to compile.
pub const BROKEN: &str = "// BROKEN";
/// Reconstructions containing this marker fail to compile.
pub const SYNTAX: &str = "// SYNTAX";
pub const NEQ: &str = "// NEQ";
pub const INCONCLUSIVE: &str = "// INC";
/// Reconstructions containing this marker fail the testbench.
pub const RR_FAIL: &str = "// RRFAIL";

const FAKE_TRACE: &str = "$timescale 1ns $end\n$var wire 4 a gold_q $end\n$var wire 4 b gate_q $end\n$enddefinitions $end\n#0\nb0 a\nb0 b\n#1\nb1 a\n";

/// Toolchain whose results depend only on marker comments in the sources.
#[derive(Default)]
pub struct MarkerTools {
    pub compiles: AtomicU32,
    pub fec_runs: AtomicU32,
    pub sims: AtomicU32,
}

impl MarkerTools {
    pub fn fec_runs(&self) -> u32 {
        self.fec_runs.load(Ordering::SeqCst)
    }

    pub fn sims(&self) -> u32 {
        self.sims.load(Ordering::SeqCst)
    }
}

impl Toolchain for MarkerTools {
    fn compile(&self, rtl: &str, work_dir: &Path, file_name: &str, _top: Option<&str>) -> Result<CompileResult, HdlError> {
        self.compiles.fetch_add(1, Ordering::SeqCst);
        std::fs::write(work_dir.join(file_name), rtl).map_err(|e| HdlError::Io(e.to_string()))?;
        if rtl.contains(BROKEN) {
            return Ok(CompileResult::failed("fake", format!("{file_name}:1: ERROR: original does not parse")));
        }
        if rtl.contains(SYNTAX) {
            return Ok(CompileResult::failed("fake", format!("{file_name}:3: ERROR: syntax error, unexpected ';'")));
        }
        Ok(CompileResult::passed("fake"))
    }

    fn equivalence(&self, work_dir: &Path, _gold: &str, gate: &str, _top: &str) -> Result<FecOutcome, HdlError> {
        self.fec_runs.fetch_add(1, Ordering::SeqCst);
        let gate_rtl = std::fs::read_to_string(work_dir.join(gate)).map_err(|e| HdlError::Io(e.to_string()))?;
        let (verdict, log) = if gate_rtl.contains(NEQ) {
            ("neq", "SAT proof finished - model found: FAIL!")
        } else if gate_rtl.contains(INCONCLUSIVE) {
            ("inc", "SAT solving interrupted: timeout reached")
        } else {
            ("eq", "SAT proof finished - no model found: SUCCESS!")
        };
        let mut trace_paths = Vec::new();
        let verdict = match verdict {
            "neq" => {
                let p = work_dir.join("trace.vcd");
                std::fs::write(&p, FAKE_TRACE).map_err(|e| HdlError::Io(e.to_string()))?;
                trace_paths.push(p);
                FecVerdict::NotEquivalent
            }
            "inc" => FecVerdict::Inconclusive,
            _ => FecVerdict::Equivalent,
        };
        Ok(FecOutcome { verdict, raw_log: log.into(), trace_paths, duration_ms: 0, failed_side: None })
    }

    fn simulate(&self, work_dir: &Path, _sources: &[String], _top: &str) -> Result<SimOutcome, HdlError> {
        self.sims.fetch_add(1, Ordering::SeqCst);
        let dut = std::fs::read_to_string(work_dir.join("dut.v")).map_err(|e| HdlError::Io(e.to_string()))?;
        let stdout = if dut.contains(RR_FAIL) { "Mismatch at cycle 3\n" } else { "All checks passed\n" };
        Ok(SimOutcome {
            build_ok: true,
            exit_code: Some(0),
            stdout: stdout.into(),
            stderr: String::new(),
            timed_out: false,
            duration_ms: 0,
        })
    }

    fn versions(&self) -> BTreeMap<String, String> {
        BTreeMap::from([("fake".to_string(), "1".to_string())])
    }
}

pub fn counter_spec(description: &str) -> StructuredSpec {
    StructuredSpec {
        summary: "A small counter.".into(),
        module_name: "TopModule".into(),
        inputs: vec![PortDesc::new("clk", 1, "Clock."), PortDesc::new("reset", 1, "Active-high reset.")],
        outputs: vec![PortDesc::new("q", 4, "Current count.")],
        functional_description: description.into(),
        clocking_and_reset: "Rising clock edge, synchronous reset.".into(),
        notes: None,
        extra_modules: Vec::new(),
    }
}

/// Model output wrapping `spec` in markers after some analysis text.
pub fn spec_reply(spec: &StructuredSpec) -> String {
    format!("Analysis of the design follows.\n\n{}", specloop_core::render_spec(spec))
}

/// Model output with a reconstruction carrying `marker`.
pub fn rtl_reply(marker: &str) -> String {
    format!(
        "[RTL_START]\nmodule TopModule(input clk, input reset, output reg [3:0] q);\n  {marker}\n  always @(posedge clk) q <= reset ? 4'd0 : q + 4'd1;\nendmodule\n[RTL_END]"
    )
}

/// True for requests addressed to the spec generator.
pub fn is_generator(r: &specloop_core::CompletionRequest) -> bool {
    !r.purpose.is_some_and(specloop_core::PromptPurpose::is_reconstructor_bound)
}

pub const ORIGINAL: &str = "module TopModule(input clk, input reset, output reg [3:0] q);\n  always @(posedge clk)\n    if (reset) q <= 0;\n    else q <= q + 1;\nendmodule\n";

/// Generators of well-formed specs.
pub mod strategies {
    use std::sync::{Arc, Mutex};

    use proptest::prelude::*;
    use specloop_core::{CompletionRequest, FeedbackMode, PortDesc, StructuredSpec};

    const WORDS: &[&str] = &[
        "the", "counter", "increments", "on", "each", "rising", "edge", "of", "clock", "when", "enable", "is", "high",
        "output", "holds", "value", "reset", "clears", "register", "to", "zero", "bit", "shifted", "left", "sum",
        "carry", "(8-bit)", "a+b", "q[3:0]", "=", "1;", "state", "idle,", "busy.", "wraps", "after", "999",
    ];

    fn sentence() -> impl Strategy<Value = String> {
        prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|w| {
            let mut s = w.join(" ");
            s.push('.');
            s
        })
    }

    fn paragraph() -> impl Strategy<Value = String> {
        prop::collection::vec(sentence(), 1..4).prop_map(|lines| lines.join("\n"))
    }

    fn ident() -> impl Strategy<Value = String> {
        "[a-z][a-z0-9_]{0,7}".prop_map(|s| format!("p_{s}"))
    }

    fn ports() -> impl Strategy<Value = Vec<PortDesc>> {
        prop::collection::vec((ident(), 1u32..65, sentence()), 0..5)
            .prop_map(|v| v.into_iter().map(|(n, w, p)| PortDesc::new(n, w, p)).collect())
    }

    fn module() -> impl Strategy<Value = StructuredSpec> {
        (
            sentence(),
            "[A-Z][A-Za-z0-9_]{0,10}",
            ports(),
            ports(),
            paragraph(),
            sentence(),
            prop::option::of(sentence()),
        )
            .prop_map(|(summary, module_name, inputs, outputs, functional_description, clocking_and_reset, notes)| {
                StructuredSpec {
                    summary,
                    module_name,
                    inputs,
                    outputs,
                    functional_description,
                    clocking_and_reset,
                    notes,
                    extra_modules: Vec::new(),
                }
            })
    }

    /// A spec with up to two additional modules.
    pub fn spec() -> impl Strategy<Value = StructuredSpec> {
        (module(), prop::collection::vec(module(), 0..3)).prop_map(|(mut top, extra)| {
            top.extra_modules = extra;
            top
        })
    }

    #[derive(Debug, Clone)]
    pub struct Scenario {
        pub mode: FeedbackMode,
        pub broken_original: bool,
        pub choices: Vec<u8>,
    }

    pub fn scenario() -> impl Strategy<Value = Scenario> {
        (0..3usize, prop::bool::weighted(0.05), prop::collection::vec(any::<u8>(), 40)).prop_map(|(m, b, choices)| Scenario {
            mode: FeedbackMode::ALL[m],
            broken_original: b,
            choices,
        })
    }

    /// Generator and reconstructor answers drawn from the scenario's choices.
    pub fn chaos_responder(s: &Scenario) -> impl Fn(&CompletionRequest) -> String + Send + Sync {
        let choices = s.choices.clone();
        let next = Arc::new(Mutex::new(0usize));
        move |r| {
            let mut i = next.lock().unwrap();
            let c = choices[*i % choices.len()];
            *i += 1;
            if super::is_generator(r) {
                match c % 4 {
                    0 => "no spec here".into(),
                    1 => super::spec_reply(&super::counter_spec("Counts up.")),
                    _ => super::spec_reply(&super::counter_spec(&format!("Counts up; variant {}.", *i))),
                }
            } else {
                match c % 5 {
                    0 => super::rtl_reply(super::SYNTAX),
                    1 => super::rtl_reply(super::NEQ),
                    2 => super::rtl_reply(super::INCONCLUSIVE),
                    3 if c % 7 == 0 => "forgot the markers".into(),
                    _ => super::rtl_reply("// EQ"),
                }
            }
        }
    }
}
