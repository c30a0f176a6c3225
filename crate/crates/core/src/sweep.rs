//! Parameter sweeps: one simulation per (seed, A3 setting) point, reduced to
//! the crossing-interval metrics.

use serde::{Deserialize, Serialize};

use crate::experiment::crossing_ping_pongs;
use crate::par;
use crate::ran_sim::{fps_variance, run_scenario, A3Config, ScenarioSpec, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub seed: u64,
    pub a3: A3Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub point: SweepPoint,
    pub handovers: usize,
    pub ping_pongs_crossing: usize,
    pub fps_variance_crossing: f64,
}

/// Cartesian product, seeds outermost.
pub fn grid(seeds: &[u64], configs: &[A3Config]) -> Vec<SweepPoint> {
    seeds.iter().flat_map(|&seed| configs.iter().map(move |&a3| SweepPoint { seed, a3 })).collect()
}

pub fn evaluate(base: &ScenarioSpec, point: &SweepPoint) -> Result<SweepResult, SimError> {
    let mut spec = base.with_a3(point.a3);
    spec.seed = point.seed;
    let out = run_scenario(&spec)?;
    let [from, to] = spec.sim.crossing_interval_s;
    Ok(SweepResult {
        point: *point,
        handovers: out.handovers.len(),
        ping_pongs_crossing: crossing_ping_pongs(&out.handovers, spec.sim.ping_pong_window_s, from, to),
        fps_variance_crossing: fps_variance(&out.fps, from, to),
    })
}

pub fn run_sequential(base: &ScenarioSpec, points: &[SweepPoint]) -> Result<Vec<SweepResult>, SimError> {
    par::map_sequential(points, |p| evaluate(base, p)).into_iter().collect()
}

/// Same results as [`run_sequential`]; spread over threads when the
/// `parallel` feature is on.
pub fn run_parallel(base: &ScenarioSpec, points: &[SweepPoint]) -> Result<Vec<SweepResult>, SimError> {
    par::map(points, |p| evaluate(base, p)).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential() {
        let base = ScenarioSpec::reference();
        let points = grid(&[42, 43], &[base.presets.misconfigured, base.presets.corrected]);
        let a = run_sequential(&base, &points).unwrap();
        let b = run_parallel(&base, &points).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        assert!(a[0].ping_pongs_crossing >= 4);
        assert!(a[1].ping_pongs_crossing <= 1);
    }
}
