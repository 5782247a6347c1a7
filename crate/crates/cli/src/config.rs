//! TOML configuration. Every section is optional and falls back to defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use testforge_core::agent::AgentConfig;
use testforge_core::enhance::PipelineConfig;
use testforge_core::llm::ProviderConfig;
use testforge_core::security::RateLimitConfig;
use testforge_queue::QueueConfig;
use testforge_webdriver::RemoteConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory holding one sub-directory per simulated site.
    pub fixtures: PathBuf,
    /// Where artifacts are written.
    pub out: PathBuf,
    /// Job store journal.
    pub store: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            fixtures: PathBuf::from("fixtures/sites"),
            out: PathBuf::from("out"),
            store: PathBuf::from(".testforge/jobs.ndjson"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub timing_rerun_wait_ms: u64,
}

impl Default for AblationSection {
    fn default() -> Self {
        AblationSection { timing_rerun_wait_ms: 15_000 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecuritySection {
    /// JSON rule file replacing the built-in guardrails.
    pub guardrails: Option<PathBuf>,
    pub rate_limit: RateLimitConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub paths: Paths,
    pub agent: AgentConfig,
    pub pipeline: PipelineConfig,
    pub provider: ProviderConfig,
    pub queue: QueueConfig,
    pub webdriver: RemoteConfig,
    pub ablation: AblationSection,
    pub security: SecuritySection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Config::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.pipeline.validate().map_err(|e| bad(&e))?;
        self.provider.validate().map_err(|e| bad(&e))?;
        self.queue.validate().map_err(|e| bad(&e))?;
        if !(0.0..=1.0).contains(&self.agent.success_threshold) || self.agent.max_attempts == 0 {
            return Err(CliError::Config("agent.success_threshold must be in [0, 1] and max_attempts > 0".into()));
        }
        if self.webdriver.timeout_ms == 0 {
            return Err(CliError::Config("webdriver.timeout_ms must be positive".into()));
        }
        Ok(())
    }

    /// Defaults rendered as TOML, for `testforge config`.
    pub fn defaults_toml() -> String {
        toml::to_string_pretty(&Config::default()).expect("defaults serialize")
    }
}
