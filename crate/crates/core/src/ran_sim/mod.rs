//! Deterministic two-cell RAN simulator.
//!
//! Log-distance path loss plus per-cell correlated shadowing produces an RSRP
//! trace along a UE trajectory; an A3 entering/leaving engine decides when to
//! hand over; handovers blank uplink frames, which yields an FPS proxy.

mod a3;
mod metrics;
mod radio;
mod scenario;
mod sim;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use a3::{evaluate_a3, A3Tracker, A3Trigger};
pub use metrics::{compute_fps, count_ping_pongs, fps_variance, DEFAULT_PING_PONG_WINDOW_S};
pub use radio::{compute_rsrp, path_loss_rsrp, RadioParams, ShadowingProcess, MIN_DISTANCE_M};
pub use scenario::{A3Presets, CellEntry, ScenarioSpec, SimParams, TrajectorySpec, SCHEMA_VERSION};
pub use sim::{run_scenario, ScenarioOutput};

/// Time-to-trigger values a cell may be configured with, in milliseconds.
pub const ALLOWED_TTT_MS: [u32; 13] = [0, 40, 64, 80, 100, 128, 160, 256, 320, 480, 512, 640, 1024];

pub const MAX_ABS_OFFSET_DB: f64 = 15.0;
pub const MAX_HYSTERESIS_DB: f64 = 15.0;

/// A cell is addressed by the gNB that serves it and its index within that gNB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellId {
    pub gnb_id: u32,
    pub cell_id: u32,
}

impl CellId {
    pub const fn new(gnb_id: u32, cell_id: u32) -> Self {
        Self { gnb_id, cell_id }
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gNB-{}/cell-{}", self.gnb_id, self.cell_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Position {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Position> for [f64; 2] {
    fn from(p: Position) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A3Config {
    pub offset_db: f64,
    pub hysteresis_db: f64,
    pub ttt_ms: u32,
}

fn is_half_db_step(v: f64) -> bool {
    v.is_finite() && (v * 2.0).fract() == 0.0
}

pub fn validate_offset_db(v: f64) -> Result<(), String> {
    if !is_half_db_step(v) {
        return Err(format!("offset {v} dB is not a multiple of 0.5 dB"));
    }
    if v.abs() > MAX_ABS_OFFSET_DB {
        return Err(format!("offset {v} dB outside [-15, 15]"));
    }
    Ok(())
}

pub fn validate_hysteresis_db(v: f64) -> Result<(), String> {
    if !is_half_db_step(v) {
        return Err(format!("hysteresis {v} dB is not a multiple of 0.5 dB"));
    }
    if !(0.0..=MAX_HYSTERESIS_DB).contains(&v) {
        return Err(format!("hysteresis {v} dB outside [0, 15]"));
    }
    Ok(())
}

pub fn validate_ttt_ms(v: u32) -> Result<(), String> {
    if ALLOWED_TTT_MS.contains(&v) {
        Ok(())
    } else {
        Err(format!("time-to-trigger {v} ms is not an allowed value"))
    }
}

impl A3Config {
    pub const fn new(offset_db: f64, hysteresis_db: f64, ttt_ms: u32) -> Self {
        Self { offset_db, hysteresis_db, ttt_ms }
    }

    pub fn validate(&self) -> Result<(), String> {
        validate_offset_db(self.offset_db)?;
        validate_hysteresis_db(self.hysteresis_db)?;
        validate_ttt_ms(self.ttt_ms)
    }

    /// Neighbor-minus-serving level that must be exceeded to enter.
    pub fn entering_threshold_db(&self) -> f64 {
        self.offset_db + self.hysteresis_db
    }

    /// Neighbor-minus-serving level the difference must drop below to leave.
    pub fn leaving_threshold_db(&self) -> f64 {
        self.offset_db - self.hysteresis_db
    }
}

impl fmt::Display for A3Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "offset {} dB, hysteresis {} dB, TTT {} ms",
            self.offset_db, self.hysteresis_db, self.ttt_ms
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub id: CellId,
    pub position: Position,
    pub tx_power_ref_dbm: f64,
    pub a3: A3Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Waypoint {
    pub time_s: f64,
    pub position: Position,
}

impl From<[f64; 3]> for Waypoint {
    fn from(v: [f64; 3]) -> Self {
        Self { time_s: v[0], position: Position::new(v[1], v[2]) }
    }
}

impl From<Waypoint> for [f64; 3] {
    fn from(w: Waypoint) -> Self {
        [w.time_s, w.position.x, w.position.y]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeTrajectory {
    pub ue_id: u32,
    pub waypoints: Vec<Waypoint>,
}

impl UeTrajectory {
    pub fn validate(&self) -> Result<(), String> {
        if self.waypoints.len() < 2 {
            return Err("at least two waypoints are required".into());
        }
        for w in &self.waypoints {
            if !(w.time_s.is_finite() && w.position.x.is_finite() && w.position.y.is_finite()) {
                return Err("waypoint values must be finite".into());
            }
        }
        if self.waypoints.windows(2).any(|w| w[1].time_s <= w[0].time_s) {
            return Err("waypoint times must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn start_s(&self) -> f64 {
        self.waypoints[0].time_s
    }

    pub fn end_s(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].time_s
    }

    /// Linear interpolation, clamped to the first/last waypoint.
    pub fn position_at(&self, t: f64) -> Position {
        let w = &self.waypoints;
        if t <= w[0].time_s {
            return w[0].position;
        }
        let i = w.partition_point(|p| p.time_s <= t);
        if i >= w.len() {
            return w[w.len() - 1].position;
        }
        let (a, b) = (&w[i - 1], &w[i]);
        let f = (t - a.time_s) / (b.time_s - a.time_s);
        Position::new(
            a.position.x + f * (b.position.x - a.position.x),
            a.position.y + f * (b.position.y - a.position.y),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadioSample {
    pub time_s: f64,
    pub rsrp_dbm: Vec<(CellId, f64)>,
}

impl RadioSample {
    pub fn rsrp(&self, cell: CellId) -> Option<f64> {
        self.rsrp_dbm.iter().find(|(c, _)| *c == cell).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HandoverOutcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandoverRecord {
    pub time_s: f64,
    pub ue_id: u32,
    pub source_cell: CellId,
    pub target_cell: CellId,
    pub outcome: HandoverOutcome,
    pub trigger_margin_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpsSample {
    pub second: u32,
    pub fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpsTrace {
    pub nominal_fps: f64,
    pub samples: Vec<FpsSample>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {field}: {reason}")]
    InvalidScenario { field: String, reason: String },
    #[error("radio trace is empty")]
    EmptyTrace,
    #[error("cell {0} has no samples in the trace")]
    UnknownCell(CellId),
    #[error("serving and neighbor cell must differ")]
    SameCell,
}

impl SimError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        SimError::InvalidScenario { field: field.into(), reason: reason.into() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a3_validation() {
        assert!(A3Config::new(2.0, 2.0, 100).validate().is_ok());
        assert!(A3Config::new(2.25, 2.0, 100).validate().is_err());
        assert!(A3Config::new(2.0, -0.5, 100).validate().is_err());
        assert!(A3Config::new(2.0, 2.0, 300).validate().is_err());
        assert!(A3Config::new(15.5, 2.0, 100).validate().is_err());
        assert!(A3Config::new(-15.0, 0.0, 0).validate().is_ok());
    }

    #[test]
    fn trajectory_interpolates_and_clamps() {
        let t = UeTrajectory {
            ue_id: 1,
            waypoints: vec![[0.0, 0.0, 0.0].into(), [10.0, 10.0, 0.0].into(), [20.0, 10.0, 10.0].into()],
        };
        assert!(t.validate().is_ok());
        assert_eq!(t.position_at(-1.0), Position::new(0.0, 0.0));
        assert_eq!(t.position_at(5.0), Position::new(5.0, 0.0));
        assert_eq!(t.position_at(15.0), Position::new(10.0, 5.0));
        assert_eq!(t.position_at(99.0), Position::new(10.0, 10.0));
    }

    #[test]
    fn trajectory_rejects_non_increasing_times() {
        let t = UeTrajectory { ue_id: 1, waypoints: vec![[1.0, 0.0, 0.0].into(), [1.0, 1.0, 0.0].into()] };
        assert!(t.validate().is_err());
        let t = UeTrajectory { ue_id: 1, waypoints: vec![[1.0, 0.0, 0.0].into()] };
        assert!(t.validate().is_err());
    }
}
