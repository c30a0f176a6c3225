//! The reasoning loop: cycles, control intents, the tool gateway and the
//! orchestrator that enforces the mode machine and the iteration cap.
//!
//! A cycle starts in `EVENT`. Each agent step yields one control intent:
//! `CONTINUE` dispatches exactly one read-only tool request (`NEXT`),
//! `ASK_HUMAN` parks the cycle (`HUMAN`) and `STOP` ends it. Only tool
//! bearing steps count against the cap; operator turns do not.

mod gateway;
mod orchestrator;
mod trace;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ApplyReport, ConfigPatch, ConfigPath, Decision, ProposalStatus};
use crate::event_pipeline::EventBatch;
use crate::telemetry::{LogQuery, MetricQuery};

pub use gateway::{ToolGateway, MAX_CONFIG_PATHS, MAX_PARAMS_BYTES, TOOL_WHITELIST};
pub use orchestrator::{CycleHandle, CycleUpdate, Orchestrator, OrchestratorSettings, UpdateObserver};
pub use trace::{cycle_trace_ndjson, labels_match_intents, mode_grammar_ok, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Event,
    Next,
    Human,
    Stop,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Event => "EVENT",
            Mode::Next => "NEXT",
            Mode::Human => "HUMAN",
            Mode::Stop => "STOP",
        }
    }
}

/// A tool request as the agent wrote it. Untrusted until the gateway has
/// parsed it into a [`ToolRequest`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolCall {
    pub tool: String,
    pub params: serde_json::Value,
}

impl ToolCall {
    pub fn new(tool: &str, params: impl Serialize) -> Self {
        Self { tool: tool.to_string(), params: serde_json::to_value(params).expect("params serialize") }
    }
}

/// Parameters of a `CONFIG_GET` request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigQuery {
    pub paths: Vec<ConfigPath>,
}

/// A validated request for one whitelisted, read-only tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tool", content = "params", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolRequest {
    LogQuery(LogQuery),
    MetricQuery(MetricQuery),
    ConfigGet(ConfigQuery),
}

impl ToolRequest {
    pub fn name(&self) -> &'static str {
        match self {
            ToolRequest::LogQuery(_) => "LOG_QUERY",
            ToolRequest::MetricQuery(_) => "METRIC_QUERY",
            ToolRequest::ConfigGet(_) => "CONFIG_GET",
        }
    }

    pub fn to_call(&self) -> ToolCall {
        match self {
            ToolRequest::LogQuery(q) => ToolCall::new("LOG_QUERY", q),
            ToolRequest::MetricQuery(q) => ToolCall::new("METRIC_QUERY", q),
            ToolRequest::ConfigGet(q) => ToolCall::new("CONFIG_GET", q),
        }
    }
}

/// What came back through the gateway. Rejections are results too: the
/// agent sees them on its next step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ToolResult {
    Ok { data: serde_json::Value },
    Rejected { reason: String },
}

impl ToolResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ToolResult::Ok { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolExchange {
    pub tool: String,
    pub request: serde_json::Value,
    pub result: ToolResult,
    pub request_digest: String,
    pub result_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalDraft {
    pub patch: ConfigPatch,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanPayload {
    Proposal(ProposalDraft),
    Message(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE", deny_unknown_fields)]
pub enum ControlIntent {
    Continue { request: ToolCall },
    AskHuman { payload: HumanPayload },
    Stop { summary: String },
}

impl ControlIntent {
    /// The mode this intent asks for.
    pub fn mode(&self) -> Mode {
        match self {
            ControlIntent::Continue { .. } => Mode::Next,
            ControlIntent::AskHuman { .. } => Mode::Human,
            ControlIntent::Stop { .. } => Mode::Stop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepOrigin {
    Agent,
    /// Written by the orchestrator after repeated agent protocol errors.
    Orchestrator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    /// Cycle mode when the step was emitted.
    pub mode: Mode,
    /// Cycle mode after the step took effect.
    pub resulting_mode: Mode,
    /// e.g. `NEXT(LOG_QUERY)`, `HUMAN(PROPOSAL)`, `STOP`.
    pub label: String,
    pub explanation: String,
    pub intent: ControlIntent,
    pub origin: StepOrigin,
    /// Set when a CONTINUE arrived with the cap exhausted.
    #[serde(default)]
    pub forced_stop: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<ToolExchange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<String>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalOutcome {
    pub proposal_id: String,
    pub status: ProposalStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ApplyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HumanInput {
    Text { text: String },
    Decision { proposal_id: String, decision: Decision },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanTurn {
    /// Number of steps the cycle had when the operator spoke.
    pub after_step: usize,
    pub operator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<ApprovalOutcome>,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolFailure {
    /// Step index the failed attempt was meant to produce.
    pub step: usize,
    pub attempt: u32,
    pub error: String,
    pub timestamp_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningCycle {
    pub cycle_id: String,
    pub batch: EventBatch,
    pub ue_ids: Vec<u32>,
    pub iteration: u32,
    pub cap: u32,
    pub mode: Mode,
    pub parked_for_human: bool,
    pub steps: Vec<ReasoningStep>,
    pub human_turns: Vec<HumanTurn>,
    pub protocol_errors: Vec<ProtocolFailure>,
    pub proposal_ids: Vec<String>,
    pub started_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopped_at_ms: Option<u64>,
}

impl ReasoningCycle {
    pub fn is_stopped(&self) -> bool {
        self.mode == Mode::Stop
    }

    /// `EVENT` followed by one label per step.
    pub fn mode_trace(&self) -> Vec<String> {
        std::iter::once(Mode::Event.as_str().to_string()).chain(self.steps.iter().map(|s| s.label.clone())).collect()
    }

    pub fn tool_dispatches(&self) -> usize {
        self.steps.iter().filter(|s| s.tool.is_some()).count()
    }

    /// The last step's explanation, or the stop summary when stopped.
    pub fn summary(&self) -> Option<&str> {
        self.steps.last().map(|s| match &s.intent {
            ControlIntent::Stop { summary } => summary.as_str(),
            _ => s.explanation.as_str(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReasoningError {
    #[error("UE {ue_id} already has active cycle {cycle_id}")]
    CycleConflict { ue_id: u32, cycle_id: String },
    #[error("cycle {0} is not parked for human input")]
    NotParked(String),
    #[error("cycle {0} cannot step: it is stopped or waiting for the operator")]
    NotRunnable(String),
    #[error("cycle {cycle_id} has no pending proposal {proposal_id}")]
    NoPendingProposal { cycle_id: String, proposal_id: String },
}

/// Recognizes a bare approval keyword in operator chat text.
pub fn parse_decision_keyword(text: &str) -> Option<Decision> {
    let word: String = text.trim().trim_end_matches(['.', '!']).trim().to_ascii_lowercase();
    match word.as_str() {
        "approve" | "approved" => Some(Decision::Approve),
        "reject" | "rejected" => Some(Decision::Reject),
        _ => None,
    }
}
