use serde::{Deserialize, Serialize};

use super::{A3Config, CellId, RadioSample, SimError};

/// Incremental A3 entering/leaving state for one neighbor relation.
///
/// A trigger fires at the first sample where `neighbor - serving` has stayed
/// above `offset + hysteresis` for at least the time-to-trigger. After a
/// trigger the tracker is disarmed until the difference drops below
/// `offset - hysteresis` or [`A3Tracker::reset`] is called after a handover.
#[derive(Debug, Clone)]
pub struct A3Tracker {
    cfg: A3Config,
    armed: bool,
    run_start_us: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct A3Trigger {
    pub time_s: f64,
    pub margin_db: f64,
}

fn to_us(t: f64) -> i64 {
    (t * 1e6).round() as i64
}

impl A3Tracker {
    pub fn new(cfg: A3Config) -> Self {
        Self { cfg, armed: true, run_start_us: None }
    }

    pub fn config(&self) -> &A3Config {
        &self.cfg
    }

    pub fn is_armed(&self) -> bool {
        self.armed
    }

    /// Clears any partial entering run and re-arms.
    pub fn reset(&mut self) {
        self.armed = true;
        self.run_start_us = None;
    }

    /// Feeds one sample; returns the trigger margin if the event fires here.
    pub fn observe(&mut self, time_s: f64, diff_db: f64) -> Option<f64> {
        if !self.armed {
            if diff_db < self.cfg.leaving_threshold_db() {
                self.armed = true;
            }
            self.run_start_us = None;
            return None;
        }
        let entering = self.cfg.entering_threshold_db();
        if diff_db > entering {
            let now = to_us(time_s);
            let start = *self.run_start_us.get_or_insert(now);
            if now - start >= i64::from(self.cfg.ttt_ms) * 1000 {
                self.armed = false;
                self.run_start_us = None;
                return Some(diff_db - entering);
            }
        } else {
            self.run_start_us = None;
        }
        None
    }
}

/// Runs the A3 engine over a fixed trace with fixed serving/neighbor roles.
pub fn evaluate_a3(
    trace: &[RadioSample],
    serving: CellId,
    neighbor: CellId,
    cfg: &A3Config,
) -> Result<Vec<A3Trigger>, SimError> {
    if trace.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    if serving == neighbor {
        return Err(SimError::SameCell);
    }
    let mut tracker = A3Tracker::new(*cfg);
    let mut out = Vec::new();
    for s in trace {
        let p = s.rsrp(serving).ok_or(SimError::UnknownCell(serving))?;
        let n = s.rsrp(neighbor).ok_or(SimError::UnknownCell(neighbor))?;
        if let Some(margin_db) = tracker.observe(s.time_s, n - p) {
            out.push(A3Trigger { time_s: s.time_s, margin_db });
        }
    }
    Ok(out)
}
