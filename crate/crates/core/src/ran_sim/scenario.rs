//! Declarative scenario description and its TOML file schema.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{A3Config, CellConfig, CellId, Position, RadioParams, SimError, UeTrajectory, Waypoint};
use crate::event_pipeline::BatchPolicy;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct A3Presets {
    pub misconfigured: A3Config,
    pub corrected: A3Config,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub tick_ms: u32,
    pub ho_execution_delay_ms: u32,
    pub interruption_ms: u32,
    pub ping_pong_window_s: f64,
    /// Interval in which the UE traverses the overlap region; used for
    /// per-interval ping-pong counts and FPS variance.
    pub crossing_interval_s: [f64; 2],
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            tick_ms: 10,
            ho_execution_delay_ms: 50,
            interruption_ms: 500,
            ping_pong_window_s: 5.0,
            crossing_interval_s: [25.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellEntry {
    pub gnb_id: u32,
    pub cell_id: u32,
    pub position: Position,
    pub tx_power_ref_dbm: f64,
    /// Per-cell override; the misconfigured preset applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a3: Option<A3Config>,
}

impl CellEntry {
    pub fn id(&self) -> CellId {
        CellId::new(self.gnb_id, self.cell_id)
    }
}

fn default_cap() -> u32 {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub schema_version: u32,
    pub name: String,
    pub seed: u64,
    pub nominal_fps: f64,
    #[serde(default = "default_cap")]
    pub iteration_cap: u32,
    #[serde(default)]
    pub radio: RadioParams,
    #[serde(default)]
    pub sim: SimParams,
    pub presets: A3Presets,
    #[serde(default)]
    pub batch_policy: BatchPolicy,
    pub cells: Vec<CellEntry>,
    pub trajectory: UeTrajectory,
}

/// Re-exported name for the trajectory section of the file.
pub type TrajectorySpec = UeTrajectory;

impl ScenarioSpec {
    /// Two indoor cells 40 m apart (gNB-30 west, gNB-31 east). UE 17 walks
    /// out of gNB-30's coverage, zig-zags across the cell border between
    /// 25 s and 60 s, then settles under gNB-31.
    ///
    /// Shadowing spreads handovers in the crossing up to ~5 s apart, so the
    /// scenario widens the quiescence window to keep the crossing in a
    /// single batch.
    pub fn reference() -> Self {
        let mut waypoints: Vec<Waypoint> = vec![[0.0, 4.0, 6.0].into(), [25.0, 16.0, 6.0].into()];
        // 35 s of border crossings, alternating sides every 1.25 s.
        let mut t = 25.0;
        let mut east = true;
        while t < 60.0 - 1e-9 {
            t += 1.25;
            let x = if east { 24.0 } else { 16.0 };
            let y = if east { 4.0 } else { 8.0 };
            waypoints.push([t, x, y].into());
            east = !east;
        }
        waypoints.push([80.0, 36.0, 6.0].into());
        waypoints.push([90.0, 36.0, 6.0].into());
        ScenarioSpec {
            schema_version: SCHEMA_VERSION,
            name: "reference".into(),
            seed: 42,
            nominal_fps: 30.0,
            iteration_cap: 5,
            radio: RadioParams::default(),
            sim: SimParams::default(),
            presets: A3Presets {
                misconfigured: A3Config::new(2.0, 2.0, 100),
                corrected: A3Config::new(4.0, 4.0, 320),
            },
            batch_policy: BatchPolicy { quiescence_ms: 6000, max_count: 50 },
            cells: vec![
                CellEntry {
                    gnb_id: 30,
                    cell_id: 1,
                    position: Position::new(0.0, 0.0),
                    tx_power_ref_dbm: -40.0,
                    a3: None,
                },
                CellEntry {
                    gnb_id: 31,
                    cell_id: 1,
                    position: Position::new(40.0, 0.0),
                    tx_power_ref_dbm: -40.0,
                    a3: None,
                },
            ],
            trajectory: UeTrajectory { ue_id: 17, waypoints },
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(SimError::invalid(
                "schema_version",
                format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            ));
        }
        if !(self.nominal_fps.is_finite() && self.nominal_fps > 0.0) {
            return Err(SimError::invalid("nominal_fps", "must be finite and > 0"));
        }
        self.radio.validate().map_err(|(f, r)| SimError::invalid(f, r))?;
        if self.sim.tick_ms == 0 || self.sim.tick_ms > 10 {
            return Err(SimError::invalid("sim.tick_ms", "must be in 1..=10 so TTT windows resolve"));
        }
        if !(self.sim.ping_pong_window_s.is_finite() && self.sim.ping_pong_window_s > 0.0) {
            return Err(SimError::invalid("sim.ping_pong_window_s", "must be > 0"));
        }
        let [from, to] = self.sim.crossing_interval_s;
        if !(from.is_finite() && to.is_finite() && from <= to) {
            return Err(SimError::invalid("sim.crossing_interval_s", "must be an ordered pair"));
        }
        self.presets
            .misconfigured
            .validate()
            .map_err(|r| SimError::invalid("presets.misconfigured", r))?;
        self.presets.corrected.validate().map_err(|r| SimError::invalid("presets.corrected", r))?;
        self.batch_policy.validate().map_err(|r| SimError::invalid("batch_policy", r))?;
        if self.cells.len() < 2 {
            return Err(SimError::invalid("cells", "at least two cells are required"));
        }
        let mut seen = BTreeSet::new();
        for (i, c) in self.cells.iter().enumerate() {
            if !seen.insert(c.id()) {
                return Err(SimError::invalid(format!("cells[{i}]"), format!("duplicate cell {}", c.id())));
            }
            if !c.tx_power_ref_dbm.is_finite() {
                return Err(SimError::invalid(format!("cells[{i}].tx_power_ref_dbm"), "must be finite"));
            }
            if !(c.position.x.is_finite() && c.position.y.is_finite()) {
                return Err(SimError::invalid(format!("cells[{i}].position"), "must be finite"));
            }
            if let Some(a3) = &c.a3 {
                a3.validate().map_err(|r| SimError::invalid(format!("cells[{i}].a3"), r))?;
            }
        }
        self.trajectory.validate().map_err(|r| SimError::invalid("trajectory", r))?;
        Ok(())
    }

    /// Cells with their effective A3 configuration.
    pub fn cell_configs(&self) -> Vec<CellConfig> {
        self.cells
            .iter()
            .map(|c| CellConfig {
                id: c.id(),
                position: c.position,
                tx_power_ref_dbm: c.tx_power_ref_dbm,
                a3: c.a3.unwrap_or(self.presets.misconfigured),
            })
            .collect()
    }

    /// Same scenario with every cell set to `a3`.
    pub fn with_a3(&self, a3: A3Config) -> Self {
        let mut s = self.clone();
        for c in &mut s.cells {
            c.a3 = Some(a3);
        }
        s
    }

    /// Same scenario with per-cell A3 taken from `live`; cells absent from
    /// the map keep their current setting.
    pub fn with_cell_a3(&self, live: &BTreeMap<CellId, A3Config>) -> Self {
        let mut s = self.clone();
        for c in &mut s.cells {
            if let Some(a3) = live.get(&c.id()) {
                c.a3 = Some(*a3);
            }
        }
        s
    }

    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| SimError::invalid("document", e.message().to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SimError::invalid("path", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }
}
