// SPDX-License-Identifier: Apache-2.0

//! Spec generation from RTL with a formal-verification feedback loop.

pub mod audit;
pub mod config;
pub mod eval;
pub mod hdl;
pub mod llm;
pub mod loop_engine;
pub mod prompting;
pub mod replay;
pub mod runner;
pub mod spec_model;
pub mod store;
pub mod verifier;

pub use config::ToolConfig;
pub use hdl::{Counterexample, Diagnosis, DiagnosisKind, FecOutcome, FecVerdict, SystemToolchain, Toolchain};
pub use llm::{CallLog, CompletionRequest, Gateway, LiveBackend, ScriptedBackend, Transcript, TranscriptEntry};
pub use loop_engine::{decide_next_action, detect_generator_stop, run_specloop, Action, FeedbackMode, LoopConfig, LoopState, Status};
pub use prompting::{PromptBuilder, PromptBundle, PromptPurpose, Verdict, VerificationReportText};
pub use spec_model::{parse_spec, render_spec, PortDesc, RawSpecText, SpecError, StructuredSpec};
pub use verifier::{build_report, verify_spec, VerifierBudget, VerifierResult};
