// SPDX-License-Identifier: Apache-2.0

//! Flat key-value configuration with environment overrides.
//!
//! Precedence: built-in defaults, then the config file, then
//! `SPECLOOP_<KEY>` environment variables (e.g. `SPECLOOP_FEC_DEPTH=20`).

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hdl::ToolchainSettings;
use crate::llm::LiveSettings;
use crate::loop_engine::{FeedbackMode, LoopConfig};
use crate::verifier::{BudgetPolicy, ReportOptions, VerifierBudget};

pub const CONFIG_ENV: &str = "SPECLOOP_CONFIG";
const ENV_PREFIX: &str = "SPECLOOP_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub compiler_cmd: String,
    pub fec_cmd: String,
    pub simulator_cmd: String,
    pub api_base_url: String,
    pub generator_model: String,
    pub reconstructor_model: String,
    /// Model used to reconstruct RTL when scoring specs.
    pub eval_model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub max_spec_retries: u32,
    pub max_recon_retries: u32,
    pub recon_budget_policy: BudgetPolicy,
    pub fec_depth: u32,
    pub compile_timeout_s: u64,
    pub fec_timeout_s: u64,
    pub sim_timeout_s: u64,
    pub llm_timeout_s: u64,
    pub llm_max_retries: u32,
    /// Requests per second; 0 disables rate limiting.
    pub llm_rate_per_s: f64,
    pub max_counterexamples: usize,
    pub log_budget_bytes: usize,
    /// Worker threads for batch runs; 0 uses the CPU count.
    pub workers: usize,
    /// Reconstruction attempts per case when scoring.
    pub rr_attempts: u32,
    /// Regexes that mark a failed testbench run. Empty uses the format's
    /// default list.
    pub failure_markers: Vec<String>,
    /// Directory with prompt templates overriding the built-in ones.
    pub prompt_dir: String,
}

impl Default for ToolConfig {
    fn default() -> Self {
        let tools = ToolchainSettings::default();
        let loop_cfg = LoopConfig::default();
        let live = LiveSettings::default();
        Self {
            compiler_cmd: tools.compiler_cmd,
            fec_cmd: tools.fec_cmd,
            simulator_cmd: tools.simulator_cmd,
            api_base_url: live.base_url,
            generator_model: loop_cfg.generator_model,
            reconstructor_model: loop_cfg.reconstructor_model,
            eval_model: "openai/gpt-5-codex".into(),
            temperature: loop_cfg.temperature,
            max_tokens: loop_cfg.max_tokens,
            max_spec_retries: loop_cfg.max_spec_retries,
            max_recon_retries: loop_cfg.verifier_budget.max_recon_retries,
            recon_budget_policy: loop_cfg.verifier_budget.policy,
            fec_depth: tools.fec_depth,
            compile_timeout_s: tools.compile_timeout_s,
            fec_timeout_s: tools.fec_timeout_s,
            sim_timeout_s: tools.sim_timeout_s,
            llm_timeout_s: live.timeout.as_secs(),
            llm_max_retries: live.max_retries,
            llm_rate_per_s: 0.0,
            max_counterexamples: loop_cfg.report.max_counterexamples,
            log_budget_bytes: loop_cfg.report.log_budget,
            workers: 0,
            rr_attempts: 1,
            failure_markers: Vec::new(),
            prompt_dir: String::new(),
        }
    }
}

fn parse_env_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl ToolConfig {
    /// Builds a config from an optional file plus environment overrides.
    /// Without an explicit path, `SPECLOOP_CONFIG` is consulted.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let env_path = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
        let path = path.map(Path::to_path_buf).or(env_path);
        let text = match &path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?,
            None => String::new(),
        };
        Self::from_sources(&text, |k| std::env::var(k).ok())
    }

    /// Parses `text` and applies overrides looked up through `env`.
    pub fn from_sources(text: &str, env: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        let defaults = toml::Table::try_from(Self::default()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for key in defaults.keys() {
            if let Some(raw) = env(&format!("{ENV_PREFIX}{}", key.to_ascii_uppercase())) {
                let value = match defaults.get(key) {
                    Some(toml::Value::String(_)) => toml::Value::String(raw),
                    _ => parse_env_value(&raw),
                };
                table.insert(key.clone(), value);
            }
        }
        let cfg: Self = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.fec_depth < 1 {
            return bad("fec_depth must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if self.max_tokens == 0 {
            return bad("max_tokens must be positive".into());
        }
        if self.rr_attempts == 0 {
            return bad("rr_attempts must be at least 1".into());
        }
        if self.llm_rate_per_s < 0.0 {
            return bad("llm_rate_per_s must be nonnegative".into());
        }
        for m in &self.failure_markers {
            if let Err(e) = regex::Regex::new(m) {
                return bad(format!("failure marker `{m}`: {e}"));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn loop_config(&self, mode: FeedbackMode) -> LoopConfig {
        LoopConfig {
            max_spec_retries: self.max_spec_retries,
            feedback_mode: mode,
            verifier_budget: VerifierBudget { max_recon_retries: self.max_recon_retries, policy: self.recon_budget_policy },
            generator_model: self.generator_model.clone(),
            reconstructor_model: self.reconstructor_model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            report: ReportOptions { max_counterexamples: self.max_counterexamples, log_budget: self.log_budget_bytes },
        }
    }

    pub fn toolchain_settings(&self) -> ToolchainSettings {
        ToolchainSettings {
            compiler_cmd: self.compiler_cmd.clone(),
            fec_cmd: self.fec_cmd.clone(),
            simulator_cmd: self.simulator_cmd.clone(),
            fec_depth: self.fec_depth,
            compile_timeout_s: self.compile_timeout_s,
            fec_timeout_s: self.fec_timeout_s,
            sim_timeout_s: self.sim_timeout_s,
        }
    }

    pub fn live_settings(&self) -> LiveSettings {
        LiveSettings {
            base_url: self.api_base_url.clone(),
            timeout: Duration::from_secs(self.llm_timeout_s),
            max_retries: self.llm_max_retries,
            ..LiveSettings::default()
        }
    }

    /// The settings that affect results, one per line.
    pub fn summary_lines(&self) -> Vec<String> {
        vec![
            format!("temperature = {}", self.temperature),
            format!("max_spec_retries = {}", self.max_spec_retries),
            format!("max_recon_retries = {} ({:?})", self.max_recon_retries, self.recon_budget_policy),
            format!("fec_depth = {}", self.fec_depth),
            format!("max_tokens = {}", self.max_tokens),
            format!("generator_model = {}", self.generator_model),
            format!("reconstructor_model = {}", self.reconstructor_model),
        ]
    }
}
