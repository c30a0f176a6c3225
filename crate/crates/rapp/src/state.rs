//! The live service: ingested events are batched on a poll tick, each batch
//! starts a reasoning cycle, and cycles that wait for the operator stay
//! parked until a chat turn or a proposal decision arrives.
//!
//! All methods are blocking. Cycle work runs under one lock, so cycles
//! advance one at a time while reads go straight to the stores.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rapp_core::audit::AuditLog;
use rapp_core::clock::Clock;
use rapp_core::config::{ConfigError, ConfigService, Decision, Proposal};
use rapp_core::event_pipeline::{normalize, wire, BatchPolicy, EventBatch, EventPipeline, EventSource, DEFAULT_HARD_CAP};
use rapp_core::experiment::{AgentFactory, BatchReport};
use rapp_core::ran_sim::{A3Config, CellId, ScenarioSpec};
use rapp_core::reasoning::{
    CycleHandle, HumanInput, Orchestrator, OrchestratorSettings, ReasoningCycle, ReasoningError,
};
use rapp_core::telemetry::{LogRecord, TelemetryStore};

use crate::stream::{StreamHub, LIVE};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no cycle is waiting for the operator")]
    NoParkedCycle,
    #[error("several cycles are waiting ({}); name one with cycle_id", .0.join(", "))]
    AmbiguousCycle(Vec<String>),
    #[error("unknown cycle {0}")]
    UnknownCycle(String),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("request body is empty")]
    EmptyBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number in the request body.
    pub line: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub accepted: usize,
    pub rejected: Vec<LineError>,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decided {
    pub proposal: Proposal,
    /// The parked cycle the decision was routed through, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_id: Option<String>,
}

#[derive(Default)]
struct CycleDesk {
    batches: Vec<BatchReport>,
    queued: VecDeque<EventBatch>,
    parked: BTreeMap<String, CycleHandle>,
}

pub struct LiveService {
    clock: Arc<dyn Clock>,
    audit: Arc<AuditLog>,
    config: Arc<ConfigService>,
    telemetry: Arc<TelemetryStore>,
    pipeline: EventPipeline,
    orchestrator: Orchestrator,
    policy: BatchPolicy,
    agent: AgentFactory,
    stream: Arc<StreamHub>,
    /// Held across log append and enqueue, and while draining batches, so a
    /// cycle never sees a batch whose events are not yet in the log store.
    ingest: Mutex<()>,
    desk: Mutex<CycleDesk>,
}

impl std::fmt::Debug for LiveService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveService")
            .field("policy", &self.policy)
            .field("config_version", &self.config.version())
            .finish_non_exhaustive()
    }
}

impl LiveService {
    /// Seeds the configuration tree from the scenario's cells.
    pub fn new(
        spec: &ScenarioSpec,
        policy: BatchPolicy,
        settings: OrchestratorSettings,
        agent: AgentFactory,
        clock: Arc<dyn Clock>,
        stream: Arc<StreamHub>,
    ) -> Self {
        let audit = Arc::new(AuditLog::new(clock.clone()));
        let cells: BTreeMap<CellId, A3Config> = spec.cell_configs().into_iter().map(|c| (c.id, c.a3)).collect();
        let config = Arc::new(ConfigService::new(cells, audit.clone()));
        let telemetry = Arc::new(TelemetryStore::new());
        let orchestrator = Orchestrator::new(config.clone(), telemetry.clone(), audit.clone(), settings);
        orchestrator.subscribe(stream.observer(LIVE));
        Self {
            clock,
            pipeline: EventPipeline::new(DEFAULT_HARD_CAP).with_audit(audit.clone()),
            audit,
            config,
            telemetry,
            orchestrator,
            policy,
            agent,
            stream,
            ingest: Mutex::new(()),
            desk: Mutex::new(CycleDesk::default()),
        }
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    pub fn config(&self) -> &Arc<ConfigService> {
        &self.config
    }

    pub fn stream(&self) -> &Arc<StreamHub> {
        &self.stream
    }

    pub fn policy(&self) -> BatchPolicy {
        self.policy
    }

    pub fn pipeline(&self) -> &EventPipeline {
        &self.pipeline
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    fn desk(&self) -> MutexGuard<'_, CycleDesk> {
        self.desk.lock().expect("cycle desk lock")
    }

    /// Ingests a newline-delimited body. Lines that fail to normalize are
    /// quarantined; every bad line is reported back with its number.
    pub fn ingest_ndjson(&self, body: &str) -> Result<IngestSummary, ServiceError> {
        if body.trim().is_empty() {
            return Err(ServiceError::EmptyBody);
        }
        let _guard = self.ingest.lock().expect("ingest lock");
        let now = self.clock.now_ms();
        let mut summary = IngestSummary { accepted: 0, rejected: Vec::new(), depth: 0 };
        for (i, line) in body.lines().enumerate() {
            let reject = |error: String| LineError { line: i + 1, error };
            let raw = match wire::decode_line(line, EventSource::External, now) {
                Ok(Some(raw)) => raw,
                Ok(None) => continue,
                Err(e) => {
                    summary.rejected.push(reject(e.to_string()));
                    continue;
                }
            };
            let event = match normalize(&raw) {
                Ok(event) => event,
                Err(_) => {
                    // Re-submitted so the pipeline quarantines and audits it.
                    let err = self.pipeline.submit_raw(raw, now).expect_err("normalization already failed");
                    summary.rejected.push(reject(err.to_string()));
                    continue;
                }
            };
            let record = LogRecord::from_event(&event);
            match self.pipeline.ingest(event, now) {
                Ok(_) => {
                    self.telemetry.append_log(record);
                    summary.accepted += 1;
                }
                Err(e) => summary.rejected.push(reject(e.to_string())),
            }
        }
        summary.depth = self.pipeline.depth();
        Ok(summary)
    }

    /// Releases due batches and starts cycles for them. Returns the ids of
    /// cycles started by this call.
    pub fn poll(&self) -> Vec<String> {
        let mut desk = self.desk();
        {
            let _guard = self.ingest.lock().expect("ingest lock");
            let now = self.clock.now_ms();
            while let Some(batch) = self.pipeline.poll_batch(&self.policy, now) {
                desk.batches.push(BatchReport {
                    batch_id: batch.batch_id.clone(),
                    events: batch.events.len(),
                    ue_ids: batch.ue_ids(),
                    trigger_reason: batch.trigger_reason,
                    cycle_id: None,
                });
                desk.queued.push_back(batch);
            }
        }
        self.drain(&mut desk)
    }

    /// Starts every queued batch whose UEs are free. Batches that touch a
    /// UE held by an open cycle wait for it to stop.
    fn drain(&self, desk: &mut CycleDesk) -> Vec<String> {
        let mut started = Vec::new();
        let mut waiting = VecDeque::new();
        while let Some(batch) = desk.queued.pop_front() {
            let batch_id = batch.batch_id.clone();
            let mut h = match self.orchestrator.start_cycle(batch.clone(), (self.agent)()) {
                Ok(h) => h,
                Err(ReasoningError::CycleConflict { .. }) => {
                    waiting.push_back(batch);
                    continue;
                }
                Err(e) => unreachable!("starting a fresh cycle: {e}"),
            };
            let cycle_id = h.cycle.cycle_id.clone();
            if let Some(b) = desk.batches.iter_mut().find(|b| b.batch_id == batch_id) {
                b.cycle_id = Some(cycle_id.clone());
            }
            tracing::info!(%cycle_id, %batch_id, "cycle started");
            self.orchestrator.run(&mut h);
            if h.cycle.parked_for_human {
                desk.parked.insert(cycle_id.clone(), h);
            }
            started.push(cycle_id);
        }
        desk.queued = waiting;
        started
    }

    fn pick_parked(&self, desk: &CycleDesk, cycle_id: Option<&str>) -> Result<String, ServiceError> {
        match cycle_id {
            Some(id) if desk.parked.contains_key(id) => Ok(id.to_string()),
            Some(id) if self.orchestrator.cycle(id).is_some() => {
                Err(ReasoningError::NotParked(id.to_string()).into())
            }
            Some(id) => Err(ServiceError::UnknownCycle(id.to_string())),
            None => match desk.parked.len() {
                0 => Err(ServiceError::NoParkedCycle),
                1 => Ok(desk.parked.keys().next().cloned().expect("one parked cycle")),
                _ => Err(ServiceError::AmbiguousCycle(desk.parked.keys().cloned().collect())),
            },
        }
    }

    /// An operator chat turn for a parked cycle; approval keywords act on
    /// its pending proposal. Returns the cycle after it stops or parks
    /// again.
    pub fn chat(&self, text: &str, cycle_id: Option<&str>, operator: &str) -> Result<ReasoningCycle, ServiceError> {
        let mut desk = self.desk();
        let id = self.pick_parked(&desk, cycle_id)?;
        let mut h = desk.parked.remove(&id).expect("picked a parked cycle");
        let result = self.orchestrator.resume_with_human_input(&mut h, HumanInput::Text { text: text.into() }, operator);
        let snapshot = h.cycle.clone();
        if h.cycle.parked_for_human {
            desk.parked.insert(id, h);
        }
        result?;
        self.drain(&mut desk);
        Ok(snapshot)
    }

    /// Approves or rejects a proposal. A proposal raised by a parked cycle
    /// is decided through that cycle so the agent sees the outcome;
    /// otherwise the decision goes straight to the configuration service.
    /// Approval applies the patch in both cases.
    pub fn decide(&self, proposal_id: &str, decision: Decision, operator: &str) -> Result<Decided, ServiceError> {
        let mut desk = self.desk();
        let mut routed = None;
        for (id, h) in desk.parked.iter_mut() {
            let input = HumanInput::Decision { proposal_id: proposal_id.into(), decision };
            match self.orchestrator.resume_with_human_input(h, input, operator) {
                Ok(()) => {
                    routed = Some(id.clone());
                    break;
                }
                Err(ReasoningError::NoPendingProposal { .. }) => continue,
                Err(e) => return Err(e.into()),
            }
        }
        match &routed {
            Some(id) => {
                if !desk.parked[id].cycle.parked_for_human {
                    desk.parked.remove(id);
                }
                self.drain(&mut desk);
            }
            None => {
                self.config.decide(proposal_id, decision, operator)?;
                if decision == Decision::Approve {
                    self.config.apply(proposal_id)?;
                }
            }
        }
        let proposal = self
            .config
            .proposal(proposal_id)
            .ok_or_else(|| ConfigError::UnknownProposal(proposal_id.to_string()))?;
        Ok(Decided { proposal, cycle_id: routed })
    }

    pub fn batches(&self) -> Vec<BatchReport> {
        self.desk().batches.clone()
    }

    pub fn queued_batches(&self) -> usize {
        self.desk().queued.len()
    }

    pub fn parked_cycles(&self) -> Vec<String> {
        self.desk().parked.keys().cloned().collect()
    }

    pub fn cycles(&self) -> Vec<ReasoningCycle> {
        self.orchestrator.cycles()
    }

    /// Stops every parked cycle, e.g. on shutdown.
    pub fn abandon_all(&self, reason: &str) {
        let mut desk = self.desk();
        for (_, mut h) in std::mem::take(&mut desk.parked) {
            self.orchestrator.abandon(&mut h, reason);
        }
    }
}
