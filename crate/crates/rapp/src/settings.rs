//! Service settings: defaults, then an optional TOML file, then `RAPP_*`
//! environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rapp_core::event_pipeline::BatchPolicy;
use rapp_core::reasoning::OrchestratorSettings;

pub const DEFAULT_PORT: u16 = 8080;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AgentBackend {
    Rule,
    Remote,
}

impl std::str::FromStr for AgentBackend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "RULE" => Ok(AgentBackend::Rule),
            "REMOTE" => Ok(AgentBackend::Remote),
            _ => Err(format!("unknown agent backend `{s}` (expected RULE or REMOTE)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum SettingsError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid settings file {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{var}: {reason}")]
    Env { var: &'static str, reason: String },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub port: u16,
    pub agent: AgentBackend,
    /// Where `POST /runs` and the live service look up scenario files.
    pub scenario_dir: PathBuf,
    /// Scenario whose cells and misconfigured preset seed the live config.
    pub scenario: String,
    /// Overrides the scenario's batch policy for live ingestion.
    pub batch_policy: Option<BatchPolicy>,
    pub orchestrator: OrchestratorSettings,
    /// Where the remote agent keeps its request/response transcripts.
    pub transcript_dir: Option<PathBuf>,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            agent: AgentBackend::Rule,
            scenario_dir: PathBuf::from("scenarios"),
            scenario: "reference".into(),
            batch_policy: None,
            orchestrator: OrchestratorSettings::default(),
            transcript_dir: None,
        }
    }
}

impl ServiceSettings {
    pub fn load(path: &Path) -> Result<Self, SettingsError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| SettingsError::Read { path: path.into(), source })?;
        toml::from_str(&text).map_err(|source| SettingsError::Parse { path: path.into(), source })
    }

    /// Reads `RAPP_PORT`, `RAPP_AGENT`, `RAPP_SCENARIO_DIR` and
    /// `RAPP_TRANSCRIPT_DIR`. Remote endpoint variables are read when the
    /// remote agent is built.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), SettingsError> {
        if let Some(v) = get("RAPP_PORT") {
            self.port = v.parse().map_err(|_| SettingsError::Env { var: "RAPP_PORT", reason: format!("not a port: {v}") })?;
        }
        if let Some(v) = get("RAPP_AGENT") {
            self.agent = v.parse().map_err(|reason| SettingsError::Env { var: "RAPP_AGENT", reason })?;
        }
        if let Some(v) = get("RAPP_SCENARIO_DIR") {
            self.scenario_dir = v.into();
        }
        if let Some(v) = get("RAPP_TRANSCRIPT_DIR") {
            self.transcript_dir = Some(v.into());
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SettingsError> {
        if let Some(p) = &self.batch_policy {
            p.validate().map_err(SettingsError::Invalid)?;
        }
        if self.orchestrator.max_human_turns == 0 {
            return Err(SettingsError::Invalid("orchestrator.max_human_turns must be >= 1".into()));
        }
        Ok(())
    }
}
