//! Headless before/after experiment. Simulated time drives a manual clock,
//! so every store timestamp in a run is a function of the scenario alone;
//! only the wall-clock section of the report varies between runs.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, RuleAgent};
use crate::audit::{AuditLog, AuditRecord};
use crate::clock::{Clock, ManualClock};
use crate::config::{ConfigService, Proposal, ProposalStatus, VersionEntry};
use crate::event_pipeline::{EventBatch, EventPipeline, NormalizedEvent, TriggerReason, DEFAULT_HARD_CAP};
use crate::ran_sim::{
    count_ping_pongs, fps_variance, run_scenario, A3Config, CellId, FpsTrace, HandoverRecord, ScenarioSpec, SimError,
};
use crate::reasoning::{
    cycle_trace_ndjson, CycleHandle, HumanInput, Orchestrator, OrchestratorSettings, ReasoningCycle, TraceRecord,
    UpdateObserver,
};
use crate::telemetry::{LogRecord, TelemetryStore};

/// The two operator turns a scripted run replays, in order.
pub const SCRIPTED_OPERATOR: [&str; 2] = ["What configuration values do you recommend?", "Approve."];
pub const SCRIPTED_OPERATOR_NAME: &str = "scripted-operator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunMode {
    Baseline,
    WithRapp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStatus {
    Completed,
    /// A cycle is parked on a proposal and nobody answered.
    AwaitingApproval,
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("event pipeline: {0}")]
    Pipeline(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSetting {
    pub cell: CellId,
    pub a3: A3Config,
}

fn settings(map: &BTreeMap<CellId, A3Config>) -> Vec<CellSetting> {
    map.iter().map(|(cell, a3)| CellSetting { cell: *cell, a3: *a3 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub name: String,
    /// Where this phase starts on the run's shared time axis.
    pub time_offset_s: f64,
    pub a3: Vec<CellSetting>,
    pub handovers: Vec<HandoverRecord>,
    pub ping_pongs: usize,
    /// Ping-pongs with both handovers in the crossing interval.
    pub ping_pongs_crossing: usize,
    pub fps: FpsTrace,
    pub fps_variance_crossing: f64,
    pub fps_min: f64,
}

impl PhaseReport {
    fn build(name: &str, spec: &ScenarioSpec, offset_s: f64, handovers: Vec<HandoverRecord>, fps: FpsTrace) -> Self {
        let window = spec.sim.ping_pong_window_s;
        let [from, to] = spec.sim.crossing_interval_s;
        let map: BTreeMap<CellId, A3Config> = spec.cell_configs().into_iter().map(|c| (c.id, c.a3)).collect();
        Self {
            name: name.to_string(),
            time_offset_s: offset_s,
            a3: settings(&map),
            ping_pongs: count_ping_pongs(&handovers, window),
            ping_pongs_crossing: crossing_ping_pongs(&handovers, window, from, to),
            fps_variance_crossing: fps_variance(&fps, from, to),
            fps_min: fps.samples.iter().map(|s| s.fps).reduce(f64::min).unwrap_or(0.0),
            handovers,
            fps,
        }
    }
}

/// Ping-pongs with both handovers inside `[from, to)`.
pub fn crossing_ping_pongs(handovers: &[HandoverRecord], window_s: f64, from: f64, to: f64) -> usize {
    let inside: Vec<HandoverRecord> =
        handovers.iter().filter(|h| h.time_s >= from && h.time_s < to).cloned().collect();
    count_ping_pongs(&inside, window_s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub batch_id: String,
    pub events: usize,
    pub ue_ids: Vec<u32>,
    pub trigger_reason: TriggerReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cycle_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleReport {
    pub cycle_id: String,
    pub batch_id: String,
    pub mode_trace: Vec<String>,
    pub iteration: u32,
    pub stopped: bool,
    pub trace: Vec<TraceRecord>,
}

impl CycleReport {
    fn of(c: &ReasoningCycle) -> Self {
        let trace = cycle_trace_ndjson(c)
            .lines()
            .map(|l| serde_json::from_str(l).expect("trace record round-trips"))
            .collect();
        Self {
            cycle_id: c.cycle_id.clone(),
            batch_id: c.batch.batch_id.clone(),
            mode_trace: c.mode_trace(),
            iteration: c.iteration,
            stopped: c.is_stopped(),
            trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalReport {
    pub proposal_id: String,
    pub status: ProposalStatus,
    pub patch: crate::config::ConfigPatch,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_by_cycle: Option<String>,
    pub history: Vec<ProposalStatus>,
}

impl From<&Proposal> for ProposalReport {
    fn from(p: &Proposal) -> Self {
        Self {
            proposal_id: p.proposal_id.clone(),
            status: p.status,
            patch: p.patch.clone(),
            rationale: p.rationale.clone(),
            created_by_cycle: p.created_by_cycle.clone(),
            history: p.transitions.iter().map(|t| t.status).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionReport {
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<String>,
    pub cells: Vec<CellSetting>,
}

/// The reproducible part of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBody {
    pub scenario: String,
    pub seed: u64,
    pub mode: RunMode,
    pub auto_approve: bool,
    pub status: RunStatus,
    pub phases: Vec<PhaseReport>,
    pub batches: Vec<BatchReport>,
    /// Batches still queued behind a parked cycle.
    pub pending_batches: usize,
    pub cycles: Vec<CycleReport>,
    pub proposals: Vec<ProposalReport>,
    pub config_version: u64,
    pub config_history: Vec<VersionReport>,
    pub audit_records: usize,
}

/// Everything that depends on when the run happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTimestamps {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    /// Simulated time of each cycle start, keyed by cycle id.
    pub cycle_started_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub body: ReportBody,
    pub timestamps: ReportTimestamps,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Canonical text of the timestamp-free section.
    pub fn body_json(&self) -> String {
        serde_json::to_string_pretty(&self.body).expect("report body serializes")
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.body.phases.iter().find(|p| p.name == name)
    }
}

pub type AgentFactory = Arc<dyn Fn() -> Box<dyn Agent> + Send + Sync>;

pub fn rule_agent_factory() -> AgentFactory {
    Arc::new(|| Box::new(RuleAgent::default()) as Box<dyn Agent>)
}

/// Knobs beyond the scenario itself.
#[derive(Clone)]
pub struct RunOptions {
    pub auto_approve: bool,
    pub agent: AgentFactory,
    pub observer: Option<UpdateObserver>,
}

impl RunOptions {
    pub fn new(auto_approve: bool) -> Self {
        Self { auto_approve, agent: rule_agent_factory(), observer: None }
    }
}

impl std::fmt::Debug for RunOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RunOptions").field("auto_approve", &self.auto_approve).finish_non_exhaustive()
    }
}

/// Stores of one run, exposed so callers can inspect the audit trail.
#[derive(Debug)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub audit: Vec<AuditRecord>,
    pub cycles: Vec<ReasoningCycle>,
}

pub fn run_experiment(spec: &ScenarioSpec, mode: RunMode, auto_approve: bool) -> Result<RunReport, ExperimentError> {
    run_experiment_with(spec, mode, &RunOptions::new(auto_approve)).map(|a| a.report)
}

fn unix_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

struct Live {
    clock: Arc<ManualClock>,
    telemetry: Arc<TelemetryStore>,
    pipeline: EventPipeline,
    orchestrator: Orchestrator,
    options: RunOptions,
    policy: crate::event_pipeline::BatchPolicy,
    batches: Vec<BatchReport>,
    queued: Vec<EventBatch>,
    parked: Option<CycleHandle>,
    started: BTreeMap<String, u64>,
}

impl Live {
    fn poll(&mut self, now_ms: u64) {
        self.clock.set(now_ms);
        while let Some(batch) = self.pipeline.poll_batch(&self.policy, now_ms) {
            self.batches.push(BatchReport {
                batch_id: batch.batch_id.clone(),
                events: batch.events.len(),
                ue_ids: batch.ue_ids(),
                trigger_reason: batch.trigger_reason,
                cycle_id: None,
            });
            self.queued.push(batch);
        }
        self.drain();
    }

    /// Starts cycles for queued batches while no cycle is parked.
    fn drain(&mut self) {
        while self.parked.is_none() && !self.queued.is_empty() {
            let batch = self.queued.remove(0);
            let batch_id = batch.batch_id.clone();
            let mut h = self.orchestrator.start_cycle(batch, (self.options.agent)()).expect("one cycle at a time");
            self.started.insert(h.cycle.cycle_id.clone(), h.cycle.started_at_ms);
            if let Some(b) = self.batches.iter_mut().find(|b| b.batch_id == batch_id) {
                b.cycle_id = Some(h.cycle.cycle_id.clone());
            }
            self.orchestrator.run(&mut h);
            if self.options.auto_approve {
                for line in SCRIPTED_OPERATOR {
                    if !h.cycle.parked_for_human {
                        break;
                    }
                    self.orchestrator
                        .resume_with_human_input(&mut h, HumanInput::Text { text: line.into() }, SCRIPTED_OPERATOR_NAME)
                        .expect("cycle is parked");
                }
            }
            if h.cycle.parked_for_human {
                self.parked = Some(h);
            }
        }
    }

    fn feed(&mut self, phase: u32, events: &[NormalizedEvent], offset_s: f64) -> Result<(), ExperimentError> {
        let period = self.policy.poll_period_ms();
        let mut next_poll = self.clock.now_ms().div_ceil(period) * period;
        let to_ms = |t: f64| ((t + offset_s) * 1000.0).round() as u64;
        for e in events {
            let at = to_ms(e.time_s);
            while next_poll <= at {
                self.poll(next_poll);
                next_poll += period;
            }
            self.clock.set(at);
            let mut e = e.clone();
            e.event_id = format!("p{phase}-{}", e.event_id);
            e.time_s += offset_s;
            self.telemetry.append_log(LogRecord::from_event(&e));
            self.pipeline.ingest(e, at).map_err(|err| ExperimentError::Pipeline(err.to_string()))?;
        }
        while self.pipeline.depth() > 0 {
            self.poll(next_poll);
            next_poll += period;
        }
        Ok(())
    }
}

/// Runs one experiment with its own stores and clock.
pub fn run_experiment_with(
    spec: &ScenarioSpec,
    mode: RunMode,
    options: &RunOptions,
) -> Result<RunArtifacts, ExperimentError> {
    spec.validate()?;
    let started_unix_ms = unix_ms();
    let clock = Arc::new(ManualClock::new(0));
    let audit = Arc::new(AuditLog::new(clock.clone()));
    let cells: BTreeMap<CellId, A3Config> = spec.cell_configs().into_iter().map(|c| (c.id, c.a3)).collect();
    let config = Arc::new(ConfigService::new(cells, audit.clone()));
    let telemetry = Arc::new(TelemetryStore::new());
    let orchestrator = Orchestrator::new(
        config.clone(),
        telemetry.clone(),
        audit.clone(),
        OrchestratorSettings { cap: spec.iteration_cap, ..OrchestratorSettings::default() },
    );
    if let Some(o) = &options.observer {
        orchestrator.subscribe(o.clone());
    }
    let mut live = Live {
        clock: clock.clone(),
        telemetry: telemetry.clone(),
        pipeline: EventPipeline::new(DEFAULT_HARD_CAP).with_audit(audit.clone()),
        orchestrator,
        options: options.clone(),
        policy: spec.batch_policy,
        batches: Vec::new(),
        queued: Vec::new(),
        parked: None,
        started: BTreeMap::new(),
    };

    let first = run_scenario(spec)?;
    let mut phases = vec![PhaseReport::build("misconfigured", spec, 0.0, first.handovers.clone(), first.fps.clone())];
    telemetry.append_radio(&first.radio, 0.0);
    telemetry.append_fps(&first.fps, 0.0);

    if mode == RunMode::WithRapp {
        live.feed(1, &first.events, 0.0)?;
        if live.parked.is_none() {
            let offset_s = spec.trajectory.end_s().ceil();
            let second_spec = spec.with_cell_a3(&config.a3_snapshot());
            let second = run_scenario(&second_spec)?;
            telemetry.append_radio(&second.radio, offset_s);
            telemetry.append_fps(&second.fps, offset_s);
            live.clock.set((offset_s * 1000.0) as u64);
            live.feed(2, &second.events, offset_s)?;
            phases.push(PhaseReport::build("corrected", &second_spec, offset_s, second.handovers, second.fps));
        }
    }

    let status = if live.parked.is_some() { RunStatus::AwaitingApproval } else { RunStatus::Completed };
    let cycles = live.orchestrator.cycles();
    let proposals = config.proposals();
    let body = ReportBody {
        scenario: spec.name.clone(),
        seed: spec.seed,
        mode,
        auto_approve: options.auto_approve,
        status,
        phases,
        pending_batches: live.queued.len(),
        batches: live.batches,
        cycles: cycles.iter().map(CycleReport::of).collect(),
        proposals: proposals.iter().map(ProposalReport::from).collect(),
        config_version: config.version(),
        config_history: config
            .version_history()
            .iter()
            .map(|v: &VersionEntry| VersionReport {
                version: v.version,
                proposal_id: v.proposal_id.clone(),
                cells: settings(&v.cells),
            })
            .collect(),
        audit_records: audit.len(),
    };
    let report = RunReport {
        body,
        timestamps: ReportTimestamps {
            started_unix_ms,
            finished_unix_ms: unix_ms(),
            cycle_started_ms: live.started,
        },
    };
    Ok(RunArtifacts { report, audit: audit.records(), cycles })
}
