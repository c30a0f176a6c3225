//! Agents turn a cycle context into one step: a mode, an explanation and a
//! control intent. They never touch the stores; tool requests go back to
//! the orchestrator, which routes them through the gateway.

mod llm;
mod rule;
mod transport;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Proposal;
use crate::event_pipeline::{EventKind, TriggerReason};
use crate::ran_sim::CellId;
use crate::reasoning::{ControlIntent, HumanTurn, Mode, ReasoningCycle, ToolExchange};

pub use llm::{parse_agent_response, LlmAgent, SYSTEM_PREAMBLE};
pub use rule::{PolicyTable, RuleAgent, RuleAgentParams};
#[cfg(feature = "remote")]
pub use transport::HttpTransport;
pub use transport::{ChatMessage, ModelRequest, ModelTransport, RemoteSettings, ReplayTransport};

/// Character budget for the rendered history; oldest entries go first.
pub const MAX_HISTORY_CHARS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentOutput {
    pub mode: Mode,
    pub explanation: String,
    pub intent: ControlIntent,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("unparseable agent response: {0}")]
    ParseFailure(String),
    #[error("model request timed out after {0} s")]
    Timeout(u64),
    #[error("model endpoint error: {0}")]
    Remote(String),
}

pub trait Agent: Send {
    fn name(&self) -> &str;
    fn analyze(&mut self, ctx: &AgentContext) -> Result<AgentOutput, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverBrief {
    pub time_s: f64,
    pub source_cell: CellId,
    pub target_cell: CellId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSummary {
    pub ue_id: u32,
    pub events: BTreeMap<EventKind, usize>,
    /// Successful handovers in the batch, oldest first.
    pub handovers: Vec<HandoverBrief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: String,
    pub trigger_reason: TriggerReason,
    pub event_count: usize,
    pub first_time_s: f64,
    pub last_time_s: f64,
    pub ues: Vec<UeSummary>,
}

impl BatchSummary {
    pub fn of(batch: &crate::event_pipeline::EventBatch) -> Self {
        let mut ues: BTreeMap<u32, UeSummary> = BTreeMap::new();
        for e in &batch.events {
            let ue = ues.entry(e.ue_id).or_insert_with(|| UeSummary {
                ue_id: e.ue_id,
                events: BTreeMap::new(),
                handovers: Vec::new(),
            });
            *ue.events.entry(e.kind).or_default() += 1;
            if e.kind == EventKind::HoSuccess {
                ue.handovers.push(HandoverBrief {
                    time_s: e.time_s,
                    source_cell: e.source_cell,
                    target_cell: e.target_cell,
                });
            }
        }
        for ue in ues.values_mut() {
            ue.handovers.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        }
        let times = batch.events.iter().map(|e| e.time_s);
        Self {
            batch_id: batch.batch_id.clone(),
            trigger_reason: batch.trigger_reason,
            event_count: batch.events.len(),
            first_time_s: times.clone().reduce(f64::min).unwrap_or(0.0),
            last_time_s: times.reduce(f64::max).unwrap_or(0.0),
            ues: ues.into_values().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum ContextEntry {
    Step {
        index: usize,
        label: String,
        explanation: String,
        intent: ControlIntent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        tool: Option<ToolExchange>,
    },
    Human(HumanTurn),
}

/// Everything an agent may see when producing the next step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentContext {
    pub cycle_id: String,
    pub mode: Mode,
    pub iteration: u32,
    pub cap: u32,
    pub batch: BatchSummary,
    pub history: Vec<ContextEntry>,
    /// Entries dropped from the front to stay within the budget.
    pub dropped_entries: usize,
    /// Latest proposal raised by this cycle, with its current status.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Proposal>,
    /// Operator turn the agent has not answered yet.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_input: Option<HumanTurn>,
    /// Why the previous attempt at this step was refused.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_error: Option<String>,
}

impl AgentContext {
    pub fn build(
        cycle: &ReasoningCycle,
        proposal: Option<Proposal>,
        human_input: Option<HumanTurn>,
        last_error: Option<String>,
    ) -> Self {
        // Interleave steps and operator turns in the order they happened.
        let mut history = Vec::with_capacity(cycle.steps.len() + cycle.human_turns.len());
        let mut turns = cycle.human_turns.iter().peekable();
        for step in &cycle.steps {
            while let Some(t) = turns.next_if(|t| t.after_step <= step.index) {
                history.push(ContextEntry::Human(t.clone()));
            }
            history.push(ContextEntry::Step {
                index: step.index,
                label: step.label.clone(),
                explanation: step.explanation.clone(),
                intent: step.intent.clone(),
                tool: step.tool.clone(),
            });
        }
        history.extend(turns.cloned().map(ContextEntry::Human));

        let size = |e: &ContextEntry| serde_json::to_string(e).map(|s| s.len()).unwrap_or(0);
        let mut total: usize = history.iter().map(size).sum();
        let mut dropped = 0;
        while total > MAX_HISTORY_CHARS && !history.is_empty() {
            total -= size(&history.remove(0));
            dropped += 1;
        }

        Self {
            cycle_id: cycle.cycle_id.clone(),
            mode: cycle.mode,
            iteration: cycle.iteration,
            cap: cycle.cap,
            batch: BatchSummary::of(&cycle.batch),
            history,
            dropped_entries: dropped,
            proposal,
            human_input,
            last_error,
        }
    }

    /// Most recent exchange with `tool`, if still in view.
    pub fn latest_tool(&self, tool: &str) -> Option<&ToolExchange> {
        self.history.iter().rev().find_map(|e| match e {
            ContextEntry::Step { tool: Some(t), .. } if t.tool == tool => Some(t),
            _ => None,
        })
    }

    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("context serializes")
    }
}
