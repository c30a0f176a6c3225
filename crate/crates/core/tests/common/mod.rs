//! Helpers shared by the integration suites: store harness, event builders,
//! scripted and adversarial agents, and a brute-force A3 oracle.
#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use rapp_core::agents::{Agent, AgentContext, AgentError, AgentOutput};
use rapp_core::audit::AuditLog;
use rapp_core::clock::ManualClock;
use rapp_core::config::{A3Leaf, ConfigPatch, ConfigPath, ConfigService, ConfigValue, PatchEntry};
use rapp_core::event_pipeline::{EventBatch, EventKind, NormalizedEvent, TriggerReason};
use rapp_core::ran_sim::{A3Config, CellId, ALLOWED_TTT_MS};
use rapp_core::reasoning::{
    ControlIntent, HumanPayload, Mode, Orchestrator, OrchestratorSettings, ProposalDraft, ToolCall,
};
use rapp_core::telemetry::{LogRecord, TelemetryStore};

pub const GNB30: CellId = CellId::new(30, 1);
pub const GNB31: CellId = CellId::new(31, 1);

pub struct Harness {
    pub clock: Arc<ManualClock>,
    pub audit: Arc<AuditLog>,
    pub config: Arc<ConfigService>,
    pub telemetry: Arc<TelemetryStore>,
    pub orchestrator: Orchestrator,
}

impl Harness {
    pub fn new(settings: OrchestratorSettings) -> Self {
        let clock = Arc::new(ManualClock::new(0));
        let audit = Arc::new(AuditLog::new(clock.clone()));
        let a3 = A3Config::new(2.0, 2.0, 100);
        let cells: BTreeMap<CellId, A3Config> = [(GNB30, a3), (GNB31, a3)].into_iter().collect();
        let config = Arc::new(ConfigService::new(cells, audit.clone()));
        let telemetry = Arc::new(TelemetryStore::new());
        let orchestrator = Orchestrator::new(config.clone(), telemetry.clone(), audit.clone(), settings);
        Self { clock, audit, config, telemetry, orchestrator }
    }

    pub fn with_cap(cap: u32) -> Self {
        Self::new(OrchestratorSettings { cap, ..OrchestratorSettings::default() })
    }

    /// Makes the batch visible to LOG_QUERY.
    pub fn log(&self, batch: &EventBatch) {
        for e in &batch.events {
            self.telemetry.append_log(LogRecord::from_event(e));
        }
    }
}

pub fn event(id: &str, ue_id: u32, time_s: f64, kind: EventKind, from: CellId, to: CellId) -> NormalizedEvent {
    NormalizedEvent {
        event_id: id.to_string(),
        time_s,
        ue_id,
        kind,
        source_cell: from,
        target_cell: to,
        rsrp_serving_dbm: -90.0,
        rsrp_neighbor_dbm: -85.0,
        trigger_margin_db: (kind == EventKind::A3Trigger).then_some(1.0),
        extra: BTreeMap::new(),
    }
}

pub fn batch_of(batch_id: &str, events: Vec<NormalizedEvent>) -> EventBatch {
    EventBatch {
        batch_id: batch_id.to_string(),
        events,
        trigger_reason: TriggerReason::Quiescence,
        created_at_ms: 0,
        last_ingested_at_ms: 0,
    }
}

/// A single harmless handover for one UE.
pub fn quiet_batch(batch_id: &str, ue_id: u32) -> EventBatch {
    batch_of(batch_id, vec![event(&format!("{batch_id}-1"), ue_id, 10.0, EventKind::HoSuccess, GNB30, GNB31)])
}

/// UE bouncing between the two gNBs: `handovers` alternating handovers, 1 s apart.
pub fn flapping_batch(batch_id: &str, ue_id: u32, start_s: f64, handovers: usize) -> EventBatch {
    let mut events = Vec::new();
    for i in 0..handovers {
        let t = start_s + i as f64;
        let (from, to) = if i % 2 == 0 { (GNB30, GNB31) } else { (GNB31, GNB30) };
        events.push(event(&format!("{batch_id}-a{i}"), ue_id, t - 0.1, EventKind::A3Trigger, from, to));
        events.push(event(&format!("{batch_id}-h{i}"), ue_id, t, EventKind::HoSuccess, from, to));
    }
    batch_of(batch_id, events)
}

pub fn output(intent: ControlIntent) -> AgentOutput {
    AgentOutput { mode: intent.mode(), explanation: "scripted".into(), intent }
}

pub fn log_query(ue_id: u32) -> ToolCall {
    ToolCall::new("LOG_QUERY", json!({"ue_id": ue_id, "time_range": {"from_s": 0.0, "to_s": 100.0}, "limit": 50}))
}

pub fn stop(summary: &str) -> ControlIntent {
    ControlIntent::Stop { summary: summary.into() }
}

pub fn ask(message: &str) -> ControlIntent {
    ControlIntent::AskHuman { payload: HumanPayload::Message(message.into()) }
}

pub fn corrected_patch() -> ConfigPatch {
    ConfigPatch::between(&[GNB30, GNB31], &A3Config::new(2.0, 2.0, 100), &A3Config::new(4.0, 4.0, 320))
}

pub fn propose(patch: ConfigPatch) -> ControlIntent {
    ControlIntent::AskHuman { payload: HumanPayload::Proposal(ProposalDraft { patch, rationale: "test".into() }) }
}

/// Replays a fixed list of outputs, then repeats `fallback` forever.
pub struct Scripted {
    queue: VecDeque<Result<AgentOutput, AgentError>>,
    fallback: AgentOutput,
    pub calls: usize,
}

impl Scripted {
    pub fn new(outputs: Vec<Result<AgentOutput, AgentError>>, fallback: AgentOutput) -> Self {
        Self { queue: outputs.into(), fallback, calls: 0 }
    }

    pub fn intents(intents: Vec<ControlIntent>) -> Self {
        Self::new(intents.into_iter().map(|i| Ok(output(i))).collect(), output(stop("done")))
    }

    pub fn forever(intent: ControlIntent) -> Self {
        Self::new(Vec::new(), output(intent))
    }
}

impl Agent for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn analyze(&mut self, _ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
        self.calls += 1;
        self.queue.pop_front().unwrap_or_else(|| Ok(self.fallback.clone()))
    }
}

/// Random intents, valid and otherwise, drawn from a seeded stream.
pub struct Adversary {
    rng: ChaCha8Rng,
}

impl Adversary {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn random_patch(&mut self) -> ConfigPatch {
        let n = self.rng.random_range(0..4);
        let entries = (0..n)
            .map(|_| {
                let cell = if self.rng.random_bool(0.5) { GNB30 } else { GNB31 };
                let leaf = A3Leaf::ALL[self.rng.random_range(0..3)];
                let (old, new) = match leaf {
                    A3Leaf::OffsetDb | A3Leaf::HysteresisDb => (2.0, f64::from(self.rng.random_range(0..12u8)) * 0.5),
                    A3Leaf::TttMs => (100.0, f64::from(ALLOWED_TTT_MS[self.rng.random_range(0..13)])),
                };
                // Occasionally stale or out of range.
                let old = if self.rng.random_bool(0.2) { old + 1.0 } else { old };
                let new = if self.rng.random_bool(0.1) { 99.0 } else { new };
                PatchEntry { path: ConfigPath::new(cell, leaf), expected_old: ConfigValue(old), new: ConfigValue(new) }
            })
            .collect();
        ConfigPatch::new(entries)
    }

    fn random_call(&mut self) -> ToolCall {
        match self.rng.random_range(0..7) {
            0 => log_query(self.rng.random_range(0..40)),
            1 => ToolCall::new("METRIC_QUERY", json!({"series": "FPS", "time_range": {"from_s": 0.0, "to_s": 60.0}, "downsample_s": 1.0})),
            2 => ToolCall::new("CONFIG_GET", json!({"paths": ["gnb/30/cell/1/a3/offset-db"]})),
            3 => ToolCall::new("CONFIG_GET", json!({"paths": []})),
            4 => ToolCall::new("APPLY_CONFIG", json!({"offset": 9})),
            5 => ToolCall::new("LOG_QUERY", json!({"limit": "lots"})),
            _ => ToolCall::new("restart_gnb", json!(null)),
        }
    }
}

impl Agent for Adversary {
    fn name(&self) -> &str {
        "adversary"
    }

    fn analyze(&mut self, _ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
        let roll = self.rng.random_range(0..100);
        let intent = match roll {
            0..=44 => ControlIntent::Continue { request: self.random_call() },
            45..=54 => {
                let patch = self.random_patch();
                propose(patch)
            }
            55..=64 => ask("anything?"),
            65..=69 => stop("enough"),
            70..=79 => return Err(AgentError::ParseFailure("garbage".into())),
            80..=84 => return Err(AgentError::Timeout(30)),
            85..=89 => ask(""),
            _ => {
                // Declared mode disagrees with the intent.
                let intent = ControlIntent::Continue { request: self.random_call() };
                let mode = if self.rng.random_bool(0.5) { Mode::Stop } else { Mode::Human };
                return Ok(AgentOutput { mode, explanation: "mismatch".into(), intent });
            }
        };
        let explanation = if self.rng.random_range(0..20) == 0 { " ".to_string() } else { "adversarial".to_string() };
        Ok(AgentOutput { mode: intent.mode(), explanation, intent })
    }
}

/// Brute-force A3 oracle over integer-millisecond sample times. At every
/// armed sample it walks back over the current above-threshold run and
/// fires if any run sample is at least `ttt` older. Returns
/// `(sample index, margin)` for each trigger.
pub fn a3_oracle(times_ms: &[u64], diffs: &[f64], cfg: &A3Config) -> Vec<(usize, f64)> {
    let entering = cfg.offset_db + cfg.hysteresis_db;
    let leaving = cfg.offset_db - cfg.hysteresis_db;
    let ttt = u64::from(cfg.ttt_ms);
    let mut out = Vec::new();
    let mut armed_from = 0;
    let mut i = 0;
    while i < diffs.len() {
        let mut fired = false;
        let mut k = i;
        loop {
            if diffs[k] <= entering {
                break;
            }
            if times_ms[i] - times_ms[k] >= ttt {
                fired = true;
                break;
            }
            if k == armed_from {
                break;
            }
            k -= 1;
        }
        if fired {
            out.push((i, diffs[i] - entering));
            let Some(j) = (i + 1..diffs.len()).find(|&j| diffs[j] < leaving) else {
                break;
            };
            armed_from = j + 1;
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

pub fn random_a3(rng: &mut impl Rng) -> A3Config {
    let offset = f64::from(rng.random_range(-12i32..=12)) * 0.5;
    let hysteresis = f64::from(rng.random_range(0u32..=10)) * 0.5;
    let ttt = ALLOWED_TTT_MS[rng.random_range(0..ALLOWED_TTT_MS.len())];
    A3Config::new(offset, hysteresis, ttt)
}

/// Random-walk A3 difference trace that keeps crossing the thresholds of
/// `cfg`, on a fixed sample period of `period_ms`. Some samples land exactly
/// on a threshold.
pub fn random_diff_trace(rng: &mut impl Rng, cfg: &A3Config, n: usize, period_ms: u64) -> (Vec<u64>, Vec<f64>) {
    let entering = cfg.offset_db + cfg.hysteresis_db;
    let spread = cfg.hysteresis_db + 3.0;
    let mut x = entering;
    let mut times = Vec::with_capacity(n);
    let mut diffs = Vec::with_capacity(n);
    for i in 0..n {
        x += rng.random_range(-0.6..0.6);
        x = x.clamp(entering - 2.0 * spread, entering + spread);
        let d = match rng.random_range(0..50) {
            0 => entering,
            1 => cfg.offset_db - cfg.hysteresis_db,
            _ => x,
        };
        times.push(i as u64 * period_ms);
        diffs.push(d);
    }
    (times, diffs)
}

/// What one fuzzed session did, plus every invariant it broke.
#[derive(Debug, Default)]
pub struct SessionOutcome {
    pub cycles: usize,
    pub tool_dispatches: usize,
    pub applied: usize,
    pub violations: Vec<String>,
}

/// Drives several adversarial cycles against one set of stores, with a
/// random operator and stray apply/decide calls that bypass the cycle.
/// Checks termination and gating invariants as it goes.
pub fn adversarial_session(seed: u64, cap: u32) -> SessionOutcome {
    use rapp_core::audit::{is_gapless, AuditAction};
    use rapp_core::config::{Decision, ProposalStatus};
    use rapp_core::reasoning::{mode_grammar_ok, HumanInput};

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let hs = Harness::new(OrchestratorSettings { cap, max_human_turns: 4, ..OrchestratorSettings::default() });
    let mut out = SessionOutcome::default();
    let cycles = rng.random_range(1..4);
    for c in 0..cycles {
        let batch = flapping_batch(&format!("s{seed}-b{c}"), 17, 30.0 + 20.0 * c as f64, rng.random_range(1..6));
        hs.log(&batch);
        let agent = Adversary::new(seed.wrapping_mul(31).wrapping_add(c));
        let mut h = match hs.orchestrator.start_cycle(batch, Box::new(agent)) {
            Ok(h) => h,
            Err(e) => {
                out.violations.push(format!("start refused with no active cycle: {e}"));
                continue;
            }
        };
        hs.orchestrator.run(&mut h);
        let mut turns = 0;
        while h.cycle.parked_for_human && turns < 8 {
            turns += 1;
            if rng.random_bool(0.3) {
                // Stray calls from outside the cycle.
                for p in hs.config.proposals() {
                    let _ = hs.config.apply(&p.proposal_id);
                    if rng.random_bool(0.2) {
                        let _ = hs.config.decide(&p.proposal_id, Decision::Approve, "intruder");
                        let _ = hs.config.apply(&p.proposal_id);
                    }
                }
            }
            let input = match rng.random_range(0..5) {
                0 => HumanInput::Text { text: "Approve.".into() },
                1 => HumanInput::Text { text: "reject".into() },
                2 => HumanInput::Text { text: "What does this change?".into() },
                3 => HumanInput::Decision {
                    proposal_id: h.cycle.proposal_ids.last().cloned().unwrap_or_else(|| "prop-0000".into()),
                    decision: if rng.random_bool(0.5) { Decision::Approve } else { Decision::Reject },
                },
                _ => HumanInput::Decision { proposal_id: "prop-9999".into(), decision: Decision::Approve },
            };
            let _ = hs.orchestrator.resume_with_human_input(&mut h, input, "fuzz-operator");
        }
        let trace = h.cycle.mode_trace();
        if !(h.cycle.is_stopped() || h.cycle.parked_for_human) {
            out.violations.push(format!("{}: neither stopped nor parked", h.cycle.cycle_id));
        }
        if h.cycle.tool_dispatches() > cap as usize || h.cycle.iteration > cap {
            out.violations.push(format!("{}: {} dispatches over cap {cap}", h.cycle.cycle_id, h.cycle.tool_dispatches()));
        }
        if !mode_grammar_ok(&trace, cap, h.cycle.is_stopped()) {
            out.violations.push(format!("{}: bad mode trace {trace:?}", h.cycle.cycle_id));
        }
        out.tool_dispatches += h.cycle.tool_dispatches();
        out.cycles += 1;
        hs.orchestrator.abandon(&mut h, "session over");
    }

    let proposals = hs.config.proposals();
    let applied: Vec<_> = proposals.iter().filter(|p| p.status == ProposalStatus::Applied).collect();
    out.applied = applied.len();
    if hs.config.version() != applied.len() as u64 {
        out.violations.push(format!("version {} but {} applied proposals", hs.config.version(), applied.len()));
    }
    for p in &applied {
        let history: Vec<ProposalStatus> = p.transitions.iter().map(|t| t.status).collect();
        if history != [ProposalStatus::Pending, ProposalStatus::Approved, ProposalStatus::Applied] {
            out.violations.push(format!("{} applied via {history:?}", p.proposal_id));
        }
    }
    let records = hs.audit.records();
    if !is_gapless(&records) {
        out.violations.push("audit sequence has gaps".into());
    }
    let applied_records = records.iter().filter(|r| r.action == AuditAction::ProposalApplied).count();
    if applied_records != applied.len() {
        out.violations.push(format!("{applied_records} apply records for {} applied proposals", applied.len()));
    }
    out
}
