//! Deterministic staged diagnosis. The stage is chosen from the evidence in
//! the context: batch only, handover log, A3 settings, then operator input.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Agent, AgentContext, AgentError, AgentOutput, UeSummary};
use crate::config::{A3Leaf, ConfigPatch, ConfigPath, ConfigReading, Proposal, ProposalStatus};
use crate::event_pipeline::EventKind;
use crate::ran_sim::{A3Config, CellId, ALLOWED_TTT_MS, MAX_ABS_OFFSET_DB, MAX_HYSTERESIS_DB};
use crate::reasoning::{
    ConfigQuery, ControlIntent, HumanPayload, Mode, ProposalDraft, ToolExchange, ToolRequest, ToolResult,
};
use crate::telemetry::{LogQuery, LogQueryResult, LogRecord, TimeRange};

/// Maps current A3 settings to recommended ones. Offset and hysteresis
/// are at least doubled (and raised by at least 2 dB so zero moves too),
/// clamped to their ranges; time-to-trigger goes to the smallest allowed
/// value of at least three times the current one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    /// Total over the allowed time-to-trigger values.
    pub ttt_ms: BTreeMap<u32, u32>,
}

impl Default for PolicyTable {
    fn default() -> Self {
        let ttt_ms = ALLOWED_TTT_MS
            .iter()
            .map(|&t| {
                let floor = (3 * t).max(1);
                let next = ALLOWED_TTT_MS.iter().copied().find(|&a| a >= floor).unwrap_or(1024);
                (t, next)
            })
            .collect();
        Self { ttt_ms }
    }
}

fn raise_db(x: f64, max: f64) -> f64 {
    (2.0 * x).max(x + 2.0).min(max)
}

impl PolicyTable {
    pub fn is_total(&self) -> bool {
        ALLOWED_TTT_MS.iter().all(|t| self.ttt_ms.get(t).is_some_and(|n| ALLOWED_TTT_MS.contains(n)))
    }

    pub fn recommend(&self, current: &A3Config) -> A3Config {
        A3Config {
            offset_db: raise_db(current.offset_db, MAX_ABS_OFFSET_DB),
            hysteresis_db: raise_db(current.hysteresis_db, MAX_HYSTERESIS_DB),
            ttt_ms: self.ttt_ms.get(&current.ttt_ms).copied().unwrap_or(current.ttt_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleAgentParams {
    /// Inter-gNB handovers that mark a UE as suspicious.
    pub pp_count_threshold: usize,
    pub pp_window_s: f64,
    /// Trigger margins below this are reported as marginal.
    pub marginal_db: f64,
    pub log_limit: usize,
    pub policy: PolicyTable,
}

impl Default for RuleAgentParams {
    fn default() -> Self {
        Self {
            pp_count_threshold: 3,
            pp_window_s: 10.0,
            marginal_db: 1.0,
            log_limit: 200,
            policy: PolicyTable::default(),
        }
    }
}

impl RuleAgentParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.pp_count_threshold == 0 {
            return Err("pp_count_threshold must be positive".into());
        }
        if [self.pp_window_s, self.marginal_db].iter().any(|v| v.is_nan() || *v <= 0.0) {
            return Err("pp_window_s and marginal_db must be positive".into());
        }
        if self.log_limit == 0 || self.log_limit > crate::telemetry::MAX_LOG_LIMIT {
            return Err("log_limit out of range".into());
        }
        if !self.policy.is_total() {
            return Err("policy table must cover every allowed time-to-trigger".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleAgent {
    pub params: RuleAgentParams,
}

fn out(explanation: String, intent: ControlIntent) -> AgentOutput {
    AgentOutput { mode: intent.mode(), explanation, intent }
}

fn stop(explanation: String, summary: String) -> AgentOutput {
    out(explanation, ControlIntent::Stop { summary })
}

fn fmt_db(v: f64) -> String {
    format!("{v}")
}

fn cell_list(cells: &[CellId]) -> String {
    cells.iter().map(ToString::to_string).collect::<Vec<_>>().join(" and ")
}

/// Largest number of inter-gNB handovers inside any window of `window_s`.
fn densest_window(ue: &UeSummary, window_s: f64) -> (usize, f64, f64) {
    let times: Vec<f64> = ue
        .handovers
        .iter()
        .filter(|h| h.source_cell.gnb_id != h.target_cell.gnb_id)
        .map(|h| h.time_s)
        .collect();
    let mut best = (0, 0.0, 0.0);
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] > window_s {
            lo += 1;
        }
        if hi + 1 - lo > best.0 {
            best = (hi + 1 - lo, times[lo], times[hi]);
        }
    }
    best
}

/// Handovers that undo the previous one within `window_s`.
fn reversals(hos: &[&LogRecord], window_s: f64) -> usize {
    hos.windows(2)
        .filter(|w| {
            w[1].source_cell == w[0].target_cell
                && w[1].target_cell == w[0].source_cell
                && w[1].time_s - w[0].time_s <= window_s
        })
        .count()
}

fn rejected(ex: &ToolExchange) -> Option<&str> {
    match &ex.result {
        ToolResult::Rejected { reason } => Some(reason),
        ToolResult::Ok { .. } => None,
    }
}

fn data<T: serde::de::DeserializeOwned>(ex: &ToolExchange) -> Option<T> {
    match &ex.result {
        ToolResult::Ok { data } => serde_json::from_value(data.clone()).ok(),
        ToolResult::Rejected { .. } => None,
    }
}

fn leaf_phrase(leaf: A3Leaf) -> (&'static str, &'static str) {
    match leaf {
        A3Leaf::OffsetDb => ("offset", "dB"),
        A3Leaf::HysteresisDb => ("hysteresis", "dB"),
        A3Leaf::TttMs => ("time-to-trigger", "ms"),
    }
}

/// "offset 2 -> 4 dB, ..." for the leaves a patch touches. Identical
/// changes on several cells are listed once.
fn describe_patch(patch: &ConfigPatch) -> String {
    let mut by_change: BTreeMap<(u8, String, String), Vec<CellId>> = BTreeMap::new();
    for e in &patch.entries {
        let order = match e.path.leaf {
            A3Leaf::OffsetDb => 0,
            A3Leaf::HysteresisDb => 1,
            A3Leaf::TttMs => 2,
        };
        by_change.entry((order, e.expected_old.to_string(), e.new.to_string())).or_default().push(e.path.cell);
    }
    let all_cells = patch.cells();
    by_change
        .into_iter()
        .map(|((order, old, new), cells)| {
            let leaf = [A3Leaf::OffsetDb, A3Leaf::HysteresisDb, A3Leaf::TttMs][order as usize];
            let (name, unit) = leaf_phrase(leaf);
            if cells == all_cells {
                format!("{name} {old} -> {new} {unit}")
            } else {
                format!("{name} {old} -> {new} {unit} on {}", cell_list(&cells))
            }
        })
        .collect::<Vec<_>>()
        .join(", ")
}

impl RuleAgent {
    pub fn new(params: RuleAgentParams) -> Self {
        Self { params }
    }

    fn classify(&self, ctx: &AgentContext) -> AgentOutput {
        let p = &self.params;
        let worst = ctx
            .batch
            .ues
            .iter()
            .map(|ue| (ue, densest_window(ue, p.pp_window_s)))
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.ue_id.cmp(&a.0.ue_id)));
        let handovers: usize = ctx.batch.ues.iter().map(|u| u.handovers.len()).sum();
        match worst {
            Some((ue, (count, first, last))) if count >= p.pp_count_threshold => {
                let inter: Vec<_> =
                    ue.handovers.iter().filter(|h| h.source_cell.gnb_id != h.target_cell.gnb_id).collect();
                let from_s = (inter[0].time_s / 5.0).floor() * 5.0;
                let to_s = (inter[inter.len() - 1].time_s / 5.0).floor() * 5.0 + 5.0;
                let mut gnbs: Vec<u32> =
                    inter.iter().flat_map(|h| [h.source_cell.gnb_id, h.target_cell.gnb_id]).collect();
                gnbs.sort_unstable();
                gnbs.dedup();
                let gnbs = gnbs.iter().map(|g| format!("gNB-{g}")).collect::<Vec<_>>().join(" and ");
                let query = LogQuery {
                    ue_id: Some(ue.ue_id),
                    time_range: TimeRange::new(from_s, to_s),
                    kinds: Some(vec![EventKind::A3Trigger, EventKind::HoSuccess]),
                    limit: p.log_limit,
                };
                out(
                    format!(
                        "Mobility anomaly for UE {}: {count} inter-gNB handovers between {gnbs} inside {:.1} s \
                         ({} in the batch overall). A UE settling on one cell would not switch this often. \
                         Pulling its A3 trigger and handover log for {from_s}-{to_s} s.",
                        ue.ue_id,
                        last - first,
                        inter.len()
                    ),
                    ControlIntent::Continue { request: ToolRequest::LogQuery(query).to_call() },
                )
            }
            _ => stop(
                format!(
                    "Batch {} holds {} events and {handovers} completed handover{}; no UE reaches {} \
                     inter-gNB handovers within {} s.",
                    ctx.batch.batch_id,
                    ctx.batch.event_count,
                    if handovers == 1 { "" } else { "s" },
                    p.pp_count_threshold,
                    p.pp_window_s
                ),
                "normal: mobility within expected bounds, no action needed".into(),
            ),
        }
    }

    fn inspect_logs(&self, ex: &ToolExchange) -> AgentOutput {
        let p = &self.params;
        if let Some(reason) = rejected(ex) {
            return stop(
                format!("The handover log request was refused ({reason}); the diagnosis cannot go further."),
                "inconclusive: handover log unavailable".into(),
            );
        }
        let Some(result) = data::<LogQueryResult>(ex) else {
            return stop("The handover log could not be read.".into(), "inconclusive: unreadable log".into());
        };
        let ue = result.records.first().map(|r| r.ue_id);
        let mut hos: Vec<&LogRecord> = result
            .records
            .iter()
            .filter(|r| r.kind == EventKind::HoSuccess && r.source_cell.gnb_id != r.target_cell.gnb_id)
            .collect();
        hos.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        let flips = reversals(&hos, p.pp_window_s);
        let margins: Vec<f64> = result
            .records
            .iter()
            .filter(|r| r.kind == EventKind::A3Trigger)
            .filter_map(|r| r.trigger_margin_db)
            .collect();
        let marginal = margins.iter().filter(|m| **m < p.marginal_db).count();
        let smallest = margins.iter().copied().reduce(f64::min);
        let ue_name = ue.map(|u| format!("UE {u}")).unwrap_or_else(|| "the UE".into());

        if flips < p.pp_count_threshold {
            return stop(
                format!(
                    "The log for {ue_name} shows {} inter-gNB handovers and {flips} quick reversals, fewer than \
                     the {} needed to call it ping-pong.",
                    hos.len(),
                    p.pp_count_threshold
                ),
                format!("negative: no ping-pong confirmed for {ue_name}"),
            );
        }

        let mut cells: BTreeSet<CellId> = BTreeSet::new();
        for h in &hos {
            cells.insert(h.source_cell);
            cells.insert(h.target_cell);
        }
        let cells: Vec<CellId> = cells.into_iter().take(crate::reasoning::MAX_CONFIG_PATHS / 3).collect();
        let paths: Vec<ConfigPath> = cells.iter().flat_map(|c| ConfigPath::all_for(*c)).collect();
        let margin_note = match smallest {
            Some(m) => format!(
                "{marginal} of {} A3 triggers cleared the entry threshold by less than {} dB; the closest \
                 call was {m:.2} dB.",
                margins.len(),
                fmt_db(p.marginal_db)
            ),
            None => "The log carries no A3 trigger margins.".into(),
        };
        out(
            format!(
                "Ping-pong confirmed for {ue_name}: {flips} handovers were undone within {} s, bouncing between \
                 {}. {margin_note} Next, reading the A3 settings that govern these cells.",
                p.pp_window_s,
                cell_list(&cells)
            ),
            ControlIntent::Continue { request: ToolRequest::ConfigGet(ConfigQuery { paths }).to_call() },
        )
    }

    fn propose(&self, ex: &ToolExchange) -> AgentOutput {
        if let Some(reason) = rejected(ex) {
            return stop(
                format!("Reading the A3 settings was refused ({reason}); no recommendation can be made."),
                "inconclusive: configuration unavailable".into(),
            );
        }
        let Some(readings) = data::<Vec<ConfigReading>>(ex) else {
            return stop("The A3 settings could not be read.".into(), "inconclusive: unreadable config".into());
        };
        let mut current: BTreeMap<CellId, A3Config> = BTreeMap::new();
        for r in &readings {
            let a3 = current.entry(r.path.cell).or_insert(A3Config::new(0.0, 0.0, 0));
            match r.path.leaf {
                A3Leaf::OffsetDb => a3.offset_db = r.value.0,
                A3Leaf::HysteresisDb => a3.hysteresis_db = r.value.0,
                A3Leaf::TttMs => a3.ttt_ms = r.value.as_ttt().unwrap_or(0),
            }
        }
        let version = readings.first().map(|r| r.version).unwrap_or(0);
        let mut entries = Vec::new();
        for (cell, a3) in &current {
            let next = self.params.policy.recommend(a3);
            entries.extend(ConfigPatch::between(&[*cell], a3, &next).entries);
        }
        let patch = ConfigPatch::new(entries);
        let settings = current
            .iter()
            .map(|(c, a)| {
                format!("{c}: offset {} dB, hysteresis {} dB, TTT {} ms", fmt_db(a.offset_db), fmt_db(a.hysteresis_db), a.ttt_ms)
            })
            .collect::<Vec<_>>()
            .join("; ");
        if patch.entries.is_empty() {
            return stop(
                format!("Current settings (version {version}) are {settings}, already at the policy ceiling."),
                "no change proposed: settings already at their most conservative".into(),
            );
        }
        let thresholds = current
            .values()
            .map(|a| fmt_db(a.entering_threshold_db()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect::<Vec<_>>()
            .join("/");
        let rationale = format!(
            "Ping-pong traced to a low A3 entry threshold ({thresholds} dB) held for a short time. \
             Proposed change: {}.",
            describe_patch(&patch)
        );
        out(
            format!(
                "Settings at config version {version}: {settings}. The neighbour only has to beat the serving cell \
                 by {thresholds} dB for a brief moment, which shadowing fades easily provide in both directions. \
                 Drafting a more conservative A3 setting for {} and waiting for the operator.",
                cell_list(&patch.cells())
            ),
            ControlIntent::AskHuman { payload: HumanPayload::Proposal(ProposalDraft { patch, rationale }) },
        )
    }

    fn answer(&self, ctx: &AgentContext, proposal: Option<&Proposal>) -> AgentOutput {
        let turn = ctx.human_input.as_ref().expect("caller checked human input");
        if let Some(o) = &turn.outcome {
            return match (o.status, &o.report) {
                (ProposalStatus::Applied, Some(report)) => {
                    let check = if report.read_back_matches() { "matches" } else { "does NOT match" };
                    stop(
                        format!(
                            "Proposal {} is applied as config version {}; read-back {check} on all {} changed \
                             values. The longer, larger A3 margin should keep the UE on one cell until the \
                             neighbour is clearly stronger.",
                            o.proposal_id,
                            report.version,
                            report.entries.len()
                        ),
                        format!("applied {} at version {}", o.proposal_id, report.version),
                    )
                }
                (ProposalStatus::Rejected, _) => stop(
                    format!("The operator rejected {}; the A3 settings stay as they are.", o.proposal_id),
                    format!("rejected {}: no configuration change", o.proposal_id),
                ),
                (status, _) => stop(
                    format!(
                        "Proposal {} did not take effect ({:?}): {}.",
                        o.proposal_id,
                        status,
                        o.error.as_deref().unwrap_or("no detail")
                    ),
                    format!("{} not applied", o.proposal_id),
                ),
            };
        }
        match proposal.filter(|p| p.status == ProposalStatus::Pending) {
            Some(p) => {
                let mut lines = format!("For {}: {}.", cell_list(&p.patch.cells()), describe_patch(&p.patch));
                let before: Vec<(CellId, f64, f64)> = p
                    .patch
                    .cells()
                    .into_iter()
                    .filter_map(|c| {
                        let get = |leaf| p.patch.entries.iter().find(|e| e.path.cell == c && e.path.leaf == leaf);
                        let (o, h) = (get(A3Leaf::OffsetDb)?, get(A3Leaf::HysteresisDb)?);
                        Some((c, o.expected_old.0 + h.expected_old.0, o.new.0 + h.new.0))
                    })
                    .collect();
                if let Some((_, old, new)) = before.first() {
                    lines.push_str(&format!(
                        " The entry threshold moves from {} to {} dB, so a handover needs a clearly stronger \
                         neighbour, and the longer time-to-trigger filters short fades.",
                        fmt_db(*old),
                        fmt_db(*new)
                    ));
                }
                lines.push_str(&format!(" Reply approve to apply {} or reject to drop it.", p.proposal_id));
                out(
                    "Answering the operator from the policy table; the proposal stays pending.".into(),
                    ControlIntent::AskHuman { payload: HumanPayload::Message(lines) },
                )
            }
            None => stop(
                "No proposal is open in this cycle, so there is nothing left to decide.".into(),
                "closed: no pending proposal".into(),
            ),
        }
    }

    /// The staged pipeline. Total: every context yields an output.
    pub fn decide(&self, ctx: &AgentContext) -> AgentOutput {
        if ctx.human_input.is_some() {
            return self.answer(ctx, ctx.proposal.as_ref());
        }
        if ctx.mode == Mode::Human {
            // Parked steps are only re-run with operator input; be safe anyway.
            return self.answer_without_input(ctx);
        }
        let last_tool = ctx.history.iter().rev().find_map(|e| match e {
            super::ContextEntry::Step { tool: Some(t), .. } => Some(t),
            _ => None,
        });
        match last_tool {
            None => self.classify(ctx),
            Some(t) if t.tool == "LOG_QUERY" => self.inspect_logs(t),
            Some(t) if t.tool == "CONFIG_GET" => self.propose(t),
            Some(t) => stop(
                format!("Unexpected evidence from {}; ending the cycle.", t.tool),
                "inconclusive: unexpected tool result".into(),
            ),
        }
    }

    fn answer_without_input(&self, ctx: &AgentContext) -> AgentOutput {
        let status = ctx.proposal.as_ref().map(|p| format!("{} is {:?}", p.proposal_id, p.status));
        stop(
            "Nothing new from the operator; closing the cycle.".into(),
            status.unwrap_or_else(|| "closed without operator input".into()),
        )
    }
}

impl Agent for RuleAgent {
    fn name(&self) -> &str {
        "rule"
    }

    fn analyze(&mut self, ctx: &AgentContext) -> Result<AgentOutput, AgentError> {
        Ok(self.decide(ctx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_table_anchor_and_totality() {
        let t = PolicyTable::default();
        assert!(t.is_total());
        assert_eq!(t.recommend(&A3Config::new(2.0, 2.0, 100)), A3Config::new(4.0, 4.0, 320));
        assert_eq!(t.ttt_ms[&0], 40);
        assert_eq!(t.ttt_ms[&512], 1024);
        assert_eq!(t.ttt_ms[&1024], 1024);
    }

    #[test]
    fn policy_is_monotone_and_valid() {
        let t = PolicyTable::default();
        for &ttt in &ALLOWED_TTT_MS {
            for o in -30..=30 {
                for h in 0..=30 {
                    let a = A3Config::new(f64::from(o) * 0.5, f64::from(h) * 0.5, ttt);
                    let r = t.recommend(&a);
                    assert!(r.offset_db >= a.offset_db && r.hysteresis_db >= a.hysteresis_db && r.ttt_ms >= a.ttt_ms);
                    assert!(r.validate().is_ok(), "{a:?} -> {r:?}");
                }
            }
        }
    }

    #[test]
    fn params_validate() {
        assert!(RuleAgentParams::default().validate().is_ok());
        let bad = RuleAgentParams { pp_window_s: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
