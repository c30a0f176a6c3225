//! Net analyzer rApp core.
//!
//! A seedable two-cell RAN simulator feeds mobility events through a bounded
//! batching pipeline into a gated reasoning loop. Agents may only read logs,
//! metrics and configuration through the tool gateway; configuration changes
//! are proposals that take effect only after an operator approves them.

pub mod agents;
pub mod audit;
pub mod clock;
pub mod config;
pub mod event_pipeline;
pub mod experiment;
pub mod par;
pub mod ran_sim;
pub mod reasoning;
pub mod sweep;
pub mod telemetry;

pub use agents::{Agent, AgentContext, AgentError, AgentOutput};
pub use audit::{AuditLog, AuditRecord};
pub use config::{ConfigPatch, ConfigPath, ConfigService, Proposal, ProposalStatus};
pub use event_pipeline::{BatchPolicy, EventBatch, EventPipeline, NormalizedEvent};
pub use experiment::{run_experiment, RunMode, RunReport, RunStatus};
pub use ran_sim::{run_scenario, A3Config, CellId, ScenarioOutput, ScenarioSpec};
pub use reasoning::{ControlIntent, Mode, Orchestrator, ReasoningCycle};
pub use telemetry::TelemetryStore;
