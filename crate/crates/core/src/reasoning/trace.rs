//! Line-oriented cycle trace for offline diffing, and a checker for the
//! mode grammar `EVENT NEXT{0..cap} HUMAN* STOP`.

use serde::{Deserialize, Serialize};

use super::{ControlIntent, ReasoningCycle, StepOrigin};
use crate::audit::digest;
use crate::config::Decision;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceRecord {
    Cycle {
        cycle_id: String,
        batch_id: String,
        ue_ids: Vec<u32>,
        cap: u32,
    },
    Step {
        index: usize,
        mode: String,
        label: String,
        origin: StepOrigin,
        forced_stop: bool,
        explanation: String,
        intent_digest: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_digest: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        result_digest: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        proposal_id: Option<String>,
    },
    Human {
        after_step: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        decision: Option<Decision>,
    },
    End {
        steps: usize,
        iteration: u32,
        protocol_errors: usize,
    },
}

/// NDJSON trace without timestamps, so two runs of the same scenario
/// produce identical text.
pub fn cycle_trace_ndjson(cycle: &ReasoningCycle) -> String {
    let mut records = vec![TraceRecord::Cycle {
        cycle_id: cycle.cycle_id.clone(),
        batch_id: cycle.batch.batch_id.clone(),
        ue_ids: cycle.ue_ids.clone(),
        cap: cycle.cap,
    }];
    let mut turns = cycle.human_turns.iter().peekable();
    for step in &cycle.steps {
        while let Some(t) = turns.next_if(|t| t.after_step <= step.index) {
            records.push(TraceRecord::Human { after_step: t.after_step, text: t.text.clone(), decision: t.decision });
        }
        records.push(TraceRecord::Step {
            index: step.index,
            mode: step.mode.as_str().to_string(),
            label: step.label.clone(),
            origin: step.origin,
            forced_stop: step.forced_stop,
            explanation: step.explanation.clone(),
            intent_digest: digest(&step.intent),
            request_digest: step.tool.as_ref().map(|t| t.request_digest.clone()),
            result_digest: step.tool.as_ref().map(|t| t.result_digest.clone()),
            proposal_id: step.proposal_id.clone(),
        });
    }
    for t in turns {
        records.push(TraceRecord::Human { after_step: t.after_step, text: t.text.clone(), decision: t.decision });
    }
    if cycle.is_stopped() {
        records.push(TraceRecord::End {
            steps: cycle.steps.len(),
            iteration: cycle.iteration,
            protocol_errors: cycle.protocol_errors.len(),
        });
    }
    records.iter().map(|r| serde_json::to_string(r).expect("trace record") + "\n").collect()
}

/// Checks a mode trace (as from [`ReasoningCycle::mode_trace`]). With
/// `complete` the trace must end in `STOP`; otherwise it may be a prefix.
pub fn mode_grammar_ok(trace: &[String], cap: u32, complete: bool) -> bool {
    #[derive(PartialEq, PartialOrd)]
    enum Phase {
        Next,
        Human,
        Stop,
    }
    let mut it = trace.iter();
    if it.next().map(String::as_str) != Some("EVENT") {
        return false;
    }
    let mut phase = Phase::Next;
    let mut nexts = 0u32;
    for label in it {
        let here = if label.starts_with("NEXT(") && label.ends_with(')') {
            nexts += 1;
            Phase::Next
        } else if label.starts_with("HUMAN(") && label.ends_with(')') {
            Phase::Human
        } else if label == "STOP" {
            Phase::Stop
        } else {
            return false;
        };
        if phase == Phase::Stop || here < phase || nexts > cap {
            return false;
        }
        phase = here;
    }
    !complete || phase == Phase::Stop
}

/// Sanity check tying labels to recorded intents.
pub fn labels_match_intents(cycle: &ReasoningCycle) -> bool {
    cycle.steps.iter().all(|s| match (&s.intent, s.label.as_str()) {
        (ControlIntent::Continue { .. }, l) => l.starts_with("NEXT(") || (l == "STOP" && s.forced_stop),
        (ControlIntent::AskHuman { .. }, l) => l.starts_with("HUMAN("),
        (ControlIntent::Stop { .. }, l) => l == "STOP",
    })
}
