use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

use super::{
    parse_decision_keyword, ApprovalOutcome, ControlIntent, HumanInput, HumanPayload, HumanTurn, Mode,
    ProtocolFailure, ReasoningCycle, ReasoningError, ReasoningStep, StepOrigin, ToolGateway, TOOL_WHITELIST,
};
use crate::agents::{Agent, AgentContext, AgentOutput};
use crate::audit::{Actor, AuditAction, AuditLog};
use crate::config::{ConfigService, Decision, Proposal, ProposalStatus};
use crate::event_pipeline::EventBatch;
use crate::telemetry::TelemetryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorSettings {
    /// Tool-bearing steps allowed per cycle.
    pub cap: u32,
    /// Extra attempts after a malformed agent output before escalating.
    pub retries: u32,
    /// Operator turns after which a parked cycle is stopped.
    pub max_human_turns: u32,
}

impl Default for OrchestratorSettings {
    fn default() -> Self {
        Self { cap: 5, retries: 2, max_human_turns: 10 }
    }
}

/// Progress notifications, e.g. for a chat stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CycleUpdate {
    Started { cycle_id: String, batch_id: String, ue_ids: Vec<u32>, cap: u32, at_ms: u64 },
    Step { cycle_id: String, step: ReasoningStep },
    Human { cycle_id: String, turn: HumanTurn },
    Stopped { cycle_id: String, steps: usize, at_ms: u64 },
}

pub type UpdateObserver = Arc<dyn Fn(&CycleUpdate) + Send + Sync>;

/// A running cycle together with the agent driving it.
pub struct CycleHandle {
    pub cycle: ReasoningCycle,
    agent: Box<dyn Agent>,
    pending_human: Option<HumanTurn>,
}

impl std::fmt::Debug for CycleHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CycleHandle")
            .field("cycle_id", &self.cycle.cycle_id)
            .field("agent", &self.agent.name())
            .field("mode", &self.cycle.mode)
            .finish()
    }
}

pub struct Orchestrator {
    config: Arc<ConfigService>,
    gateway: ToolGateway,
    audit: Arc<AuditLog>,
    settings: OrchestratorSettings,
    /// UE id -> cycle currently holding it.
    active: Mutex<BTreeMap<u32, String>>,
    cycles: RwLock<BTreeMap<String, ReasoningCycle>>,
    next_cycle: AtomicU64,
    observers: RwLock<Vec<UpdateObserver>>,
}

impl std::fmt::Debug for Orchestrator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Orchestrator").field("settings", &self.settings).finish_non_exhaustive()
    }
}

impl Orchestrator {
    pub fn new(
        config: Arc<ConfigService>,
        telemetry: Arc<TelemetryStore>,
        audit: Arc<AuditLog>,
        settings: OrchestratorSettings,
    ) -> Self {
        Self {
            gateway: ToolGateway::new(telemetry, config.clone(), audit.clone()),
            config,
            audit,
            settings,
            active: Mutex::new(BTreeMap::new()),
            cycles: RwLock::new(BTreeMap::new()),
            next_cycle: AtomicU64::new(1),
            observers: RwLock::new(Vec::new()),
        }
    }

    pub fn settings(&self) -> OrchestratorSettings {
        self.settings
    }

    pub fn config(&self) -> &Arc<ConfigService> {
        &self.config
    }

    pub fn subscribe(&self, observer: UpdateObserver) {
        self.observers.write().expect("observer lock").push(observer);
    }

    fn notify(&self, update: CycleUpdate) {
        for o in self.observers.read().expect("observer lock").iter() {
            o(&update);
        }
    }

    fn publish(&self, cycle: &ReasoningCycle) {
        self.cycles.write().expect("cycle registry").insert(cycle.cycle_id.clone(), cycle.clone());
    }

    /// Latest snapshot of every cycle this orchestrator has run.
    pub fn cycles(&self) -> Vec<ReasoningCycle> {
        self.cycles.read().expect("cycle registry").values().cloned().collect()
    }

    pub fn cycle(&self, cycle_id: &str) -> Option<ReasoningCycle> {
        self.cycles.read().expect("cycle registry").get(cycle_id).cloned()
    }

    /// Cycle ids that currently hold UE keys.
    pub fn active_cycles(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.active.lock().expect("active lock").values().cloned().collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn start_cycle(&self, batch: EventBatch, agent: Box<dyn Agent>) -> Result<CycleHandle, ReasoningError> {
        self.start_cycle_with_cap(batch, agent, self.settings.cap)
    }

    pub fn start_cycle_with_cap(
        &self,
        batch: EventBatch,
        agent: Box<dyn Agent>,
        cap: u32,
    ) -> Result<CycleHandle, ReasoningError> {
        let ue_ids = batch.ue_ids();
        let cycle_id = {
            let mut active = self.active.lock().expect("active lock");
            if let Some((ue, holder)) = ue_ids.iter().find_map(|u| active.get(u).map(|c| (*u, c))) {
                return Err(ReasoningError::CycleConflict { ue_id: ue, cycle_id: holder.clone() });
            }
            let id = format!("cycle-{:04}", self.next_cycle.fetch_add(1, Ordering::SeqCst));
            for u in &ue_ids {
                active.insert(*u, id.clone());
            }
            id
        };
        let at_ms = self.audit.now_ms();
        self.audit.append_noted(Actor::Orchestrator, AuditAction::CycleStarted, &cycle_id, &batch.batch_id, agent.name());
        let cycle = ReasoningCycle {
            cycle_id: cycle_id.clone(),
            ue_ids: ue_ids.clone(),
            iteration: 0,
            cap,
            mode: Mode::Event,
            parked_for_human: false,
            steps: Vec::new(),
            human_turns: Vec::new(),
            protocol_errors: Vec::new(),
            proposal_ids: Vec::new(),
            started_at_ms: at_ms,
            stopped_at_ms: None,
            batch,
        };
        self.publish(&cycle);
        self.notify(CycleUpdate::Started {
            cycle_id,
            batch_id: cycle.batch.batch_id.clone(),
            ue_ids,
            cap,
            at_ms,
        });
        Ok(CycleHandle { cycle, agent, pending_human: None })
    }

    fn proposal_of(&self, cycle: &ReasoningCycle) -> Option<Proposal> {
        cycle.proposal_ids.last().and_then(|id| self.config.proposal(id))
    }

    fn pending_proposal_id(&self, cycle: &ReasoningCycle) -> Option<String> {
        self.proposal_of(cycle).filter(|p| p.status == ProposalStatus::Pending).map(|p| p.proposal_id)
    }

    /// Structural checks on an agent output. Tool names and parameters are
    /// left to the gateway so that rejections reach the agent as results.
    fn check(&self, cycle: &ReasoningCycle, out: &AgentOutput) -> Result<(), String> {
        if out.mode != out.intent.mode() {
            return Err(format!(
                "declared mode {} does not match intent mode {}",
                out.mode.as_str(),
                out.intent.mode().as_str()
            ));
        }
        if out.explanation.trim().is_empty() {
            return Err("explanation is empty".into());
        }
        match &out.intent {
            ControlIntent::Continue { .. } if cycle.mode == Mode::Human => {
                Err("tool requests are not accepted once the cycle has asked the operator".into())
            }
            ControlIntent::AskHuman { payload: HumanPayload::Proposal(d) } => {
                if d.patch.entries.is_empty() {
                    return Err("proposal patch is empty".into());
                }
                if let Some(id) = self.pending_proposal_id(cycle) {
                    return Err(format!("proposal {id} is still pending"));
                }
                Ok(())
            }
            ControlIntent::AskHuman { payload: HumanPayload::Message(m) } if m.trim().is_empty() => {
                Err("operator message is empty".into())
            }
            ControlIntent::Stop { summary } if summary.trim().is_empty() => Err("stop summary is empty".into()),
            _ => Ok(()),
        }
    }

    /// One agent invocation, with retries. Proposals are registered here so
    /// that an invalid patch counts as a protocol error.
    fn obtain(&self, h: &mut CycleHandle) -> Result<(AgentOutput, Option<String>), String> {
        let index = h.cycle.steps.len();
        let mut last_error: Option<String> = None;
        for attempt in 0..=self.settings.retries {
            let ctx = AgentContext::build(
                &h.cycle,
                self.proposal_of(&h.cycle),
                h.pending_human.clone(),
                last_error.clone(),
            );
            let outcome = h.agent.analyze(&ctx).map_err(|e| e.to_string()).and_then(|out| {
                self.check(&h.cycle, &out)?;
                let proposal_id = match &out.intent {
                    ControlIntent::AskHuman { payload: HumanPayload::Proposal(d) } => Some(
                        self.config
                            .propose(d.patch.clone(), d.rationale.clone(), Some(h.cycle.cycle_id.clone()))
                            .map_err(|e| e.to_string())?
                            .proposal_id,
                    ),
                    _ => None,
                };
                Ok((out, proposal_id))
            });
            match outcome {
                Ok(ok) => return Ok(ok),
                Err(error) => {
                    self.audit.append_noted(
                        Actor::Agent,
                        AuditAction::AgentProtocolError,
                        &h.cycle.cycle_id,
                        &error,
                        format!("step {index} attempt {attempt}"),
                    );
                    h.cycle.protocol_errors.push(ProtocolFailure {
                        step: index,
                        attempt,
                        error: error.clone(),
                        timestamp_ms: self.audit.now_ms(),
                    });
                    last_error = Some(error);
                }
            }
        }
        Err(last_error.unwrap_or_default())
    }

    /// Runs one agent step. Fails only if the cycle is stopped or parked.
    pub fn step(&self, h: &mut CycleHandle) -> Result<(), ReasoningError> {
        if h.cycle.is_stopped() || h.cycle.parked_for_human {
            return Err(ReasoningError::NotRunnable(h.cycle.cycle_id.clone()));
        }
        let index = h.cycle.steps.len();
        let mode = h.cycle.mode;
        let timestamp_ms = self.audit.now_ms();
        let step = match self.obtain(h) {
            Ok((out, proposal_id)) => {
                let mut step = ReasoningStep {
                    index,
                    mode,
                    resulting_mode: out.intent.mode(),
                    label: String::new(),
                    explanation: out.explanation,
                    intent: out.intent,
                    origin: StepOrigin::Agent,
                    forced_stop: false,
                    tool: None,
                    proposal_id,
                    timestamp_ms,
                };
                match &step.intent {
                    ControlIntent::Continue { request } if h.cycle.iteration < h.cycle.cap => {
                        let tool = if TOOL_WHITELIST.contains(&request.tool.as_str()) {
                            request.tool.as_str()
                        } else {
                            "REJECTED"
                        };
                        step.label = format!("NEXT({tool})");
                        step.tool = Some(self.gateway.dispatch(request, &h.cycle.cycle_id));
                        h.cycle.iteration += 1;
                    }
                    ControlIntent::Continue { .. } => {
                        step.label = "STOP".into();
                        step.resulting_mode = Mode::Stop;
                        step.forced_stop = true;
                    }
                    ControlIntent::AskHuman { payload: HumanPayload::Proposal(_) } => {
                        step.label = "HUMAN(PROPOSAL)".into();
                        if let Some(id) = &step.proposal_id {
                            h.cycle.proposal_ids.push(id.clone());
                        }
                    }
                    ControlIntent::AskHuman { payload: HumanPayload::Message(_) } => {
                        step.label = "HUMAN(MESSAGE)".into();
                    }
                    ControlIntent::Stop { .. } => step.label = "STOP".into(),
                }
                step
            }
            Err(error) => {
                let attempts = self.settings.retries + 1;
                let question = format!(
                    "The agent produced no valid step in {attempts} attempts (last error: {error}). \
                     Reply with guidance for the agent."
                );
                ReasoningStep {
                    index,
                    mode,
                    resulting_mode: Mode::Human,
                    label: "HUMAN(MESSAGE)".into(),
                    explanation: format!("Escalating to the operator after {attempts} malformed agent outputs."),
                    intent: ControlIntent::AskHuman { payload: HumanPayload::Message(question) },
                    origin: StepOrigin::Orchestrator,
                    forced_stop: false,
                    tool: None,
                    proposal_id: None,
                    timestamp_ms,
                }
            }
        };
        h.pending_human = None;
        self.record_step(h, step);
        Ok(())
    }

    fn record_step(&self, h: &mut CycleHandle, step: ReasoningStep) {
        let actor = match step.origin {
            StepOrigin::Agent => Actor::Agent,
            StepOrigin::Orchestrator => Actor::Orchestrator,
        };
        self.audit.append_noted(actor, AuditAction::AgentStep, &h.cycle.cycle_id, &step, step.label.clone());
        h.cycle.mode = step.resulting_mode;
        h.cycle.parked_for_human = step.resulting_mode == Mode::Human;
        h.cycle.steps.push(step.clone());
        self.notify(CycleUpdate::Step { cycle_id: h.cycle.cycle_id.clone(), step });
        if h.cycle.is_stopped() {
            self.finish(h);
        } else {
            self.publish(&h.cycle);
        }
    }

    fn finish(&self, h: &mut CycleHandle) {
        let at_ms = self.audit.now_ms();
        h.cycle.stopped_at_ms = Some(at_ms);
        h.cycle.parked_for_human = false;
        {
            let mut active = self.active.lock().expect("active lock");
            active.retain(|_, c| *c != h.cycle.cycle_id);
        }
        self.audit.append_noted(
            Actor::Orchestrator,
            AuditAction::CycleStopped,
            &h.cycle.cycle_id,
            &h.cycle.mode_trace(),
            format!("{} steps, {} tool calls", h.cycle.steps.len(), h.cycle.iteration),
        );
        self.publish(&h.cycle);
        self.notify(CycleUpdate::Stopped { cycle_id: h.cycle.cycle_id.clone(), steps: h.cycle.steps.len(), at_ms });
    }

    /// Steps until the cycle stops or waits for the operator.
    pub fn run(&self, h: &mut CycleHandle) {
        while !h.cycle.is_stopped() && !h.cycle.parked_for_human {
            self.step(h).expect("runnable cycle");
        }
    }

    /// Ends a cycle that is still open, e.g. on shutdown.
    pub fn abandon(&self, h: &mut CycleHandle, reason: &str) {
        if h.cycle.is_stopped() {
            return;
        }
        self.forced_stop(h, reason);
    }

    fn forced_stop(&self, h: &mut CycleHandle, reason: &str) {
        let step = ReasoningStep {
            index: h.cycle.steps.len(),
            mode: h.cycle.mode,
            resulting_mode: Mode::Stop,
            label: "STOP".into(),
            explanation: format!("Cycle ended by the orchestrator: {reason}."),
            intent: ControlIntent::Stop { summary: reason.to_string() },
            origin: StepOrigin::Orchestrator,
            forced_stop: true,
            tool: None,
            proposal_id: None,
            timestamp_ms: self.audit.now_ms(),
        };
        self.record_step(h, step);
    }

    fn decide_and_apply(&self, proposal_id: &str, decision: Decision, operator: &str) -> ApprovalOutcome {
        let status_now = |id: &str| self.config.proposal(id).map(|p| p.status).unwrap_or(ProposalStatus::Pending);
        if let Err(e) = self.config.decide(proposal_id, decision, operator) {
            return ApprovalOutcome {
                proposal_id: proposal_id.into(),
                status: status_now(proposal_id),
                report: None,
                error: Some(e.to_string()),
            };
        }
        if decision == Decision::Reject {
            return ApprovalOutcome {
                proposal_id: proposal_id.into(),
                status: ProposalStatus::Rejected,
                report: None,
                error: None,
            };
        }
        match self.config.apply(proposal_id) {
            Ok(report) => ApprovalOutcome {
                proposal_id: proposal_id.into(),
                status: ProposalStatus::Applied,
                report: Some(report),
                error: None,
            },
            Err(e) => ApprovalOutcome {
                proposal_id: proposal_id.into(),
                status: status_now(proposal_id),
                report: None,
                error: Some(e.to_string()),
            },
        }
    }

    /// Hands operator input to a parked cycle and runs it until it stops or
    /// parks again. Approval keywords in free text act on the cycle's
    /// pending proposal.
    pub fn resume_with_human_input(
        &self,
        h: &mut CycleHandle,
        input: HumanInput,
        operator: &str,
    ) -> Result<(), ReasoningError> {
        if !h.cycle.parked_for_human || h.cycle.is_stopped() {
            return Err(ReasoningError::NotParked(h.cycle.cycle_id.clone()));
        }
        let pending = self.pending_proposal_id(&h.cycle);
        let (text, decision) = match input {
            HumanInput::Text { text } => {
                let decision = pending.clone().zip(parse_decision_keyword(&text));
                (Some(text), decision)
            }
            HumanInput::Decision { proposal_id, decision } => {
                if pending.as_deref() != Some(proposal_id.as_str()) {
                    return Err(ReasoningError::NoPendingProposal { cycle_id: h.cycle.cycle_id.clone(), proposal_id });
                }
                (None, Some((proposal_id, decision)))
            }
        };
        if h.cycle.human_turns.len() >= self.settings.max_human_turns as usize {
            self.forced_stop(h, "operator turn limit reached");
            return Ok(());
        }
        let outcome = decision.as_ref().map(|(id, d)| self.decide_and_apply(id, *d, operator));
        let turn = HumanTurn {
            after_step: h.cycle.steps.len(),
            operator: operator.to_string(),
            text,
            decision: decision.map(|(_, d)| d),
            outcome,
            timestamp_ms: self.audit.now_ms(),
        };
        self.audit.append_noted(Actor::Operator, AuditAction::HumanInput, &h.cycle.cycle_id, &turn, operator);
        h.cycle.human_turns.push(turn.clone());
        h.cycle.parked_for_human = false;
        h.pending_human = Some(turn.clone());
        self.notify(CycleUpdate::Human { cycle_id: h.cycle.cycle_id.clone(), turn });
        self.run(h);
        Ok(())
    }
}
