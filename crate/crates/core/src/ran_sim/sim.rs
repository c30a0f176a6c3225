use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    compute_fps, compute_rsrp, A3Tracker, CellConfig, FpsTrace, HandoverOutcome, HandoverRecord,
    RadioSample, ScenarioSpec, ShadowingProcess, SimError,
};
use crate::event_pipeline::{EventKind, NormalizedEvent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutput {
    pub events: Vec<NormalizedEvent>,
    pub handovers: Vec<HandoverRecord>,
    pub radio: Vec<RadioSample>,
    pub fps: FpsTrace,
}

struct PendingHandover {
    execute_at_tick: u64,
    target: usize,
    margin_db: f64,
}

struct EventSink {
    prefix: String,
    seq: u64,
    events: Vec<NormalizedEvent>,
}

impl EventSink {
    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        time_s: f64,
        ue_id: u32,
        kind: EventKind,
        source: &CellConfig,
        target: &CellConfig,
        rsrp_serving_dbm: f64,
        rsrp_neighbor_dbm: f64,
        trigger_margin_db: Option<f64>,
    ) {
        self.seq += 1;
        let mut extra = serde_json::Map::new();
        if kind == EventKind::A3Trigger {
            extra.insert("a3".into(), json!(source.a3));
        }
        self.events.push(NormalizedEvent {
            event_id: format!("{}-{:06}", self.prefix, self.seq),
            time_s,
            ue_id,
            kind,
            source_cell: source.id,
            target_cell: target.id,
            rsrp_serving_dbm,
            rsrp_neighbor_dbm,
            trigger_margin_db,
            extra: extra.into_iter().collect(),
        });
    }
}

/// Simulates the scenario at a fixed tick from the first to the last
/// waypoint. Identical specs give bit-identical output.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioOutput, SimError> {
    spec.validate()?;
    let cells = spec.cell_configs();
    let traj = &spec.trajectory;
    let ue = traj.ue_id;
    let tick_s = f64::from(spec.sim.tick_ms) / 1000.0;
    let t0 = traj.start_s();
    let duration = traj.end_s() - t0;
    let ticks = (duration / tick_s + 1e-9).floor() as u64;
    let delay_ticks = u64::from(spec.sim.ho_execution_delay_ms.div_ceil(spec.sim.tick_ms));

    let mut shadow = ShadowingProcess::new(
        spec.seed,
        cells.len(),
        spec.radio.shadowing_sigma_db,
        spec.radio.decorrelation_distance_m,
    );
    let mut sink = EventSink { prefix: format!("sim{}-ue{}", spec.seed, ue), seq: 0, events: Vec::new() };
    let mut radio = Vec::with_capacity(ticks as usize + 1);
    let mut handovers = Vec::new();

    let mut serving: Option<usize> = None;
    let mut trackers: Vec<A3Tracker> = cells.iter().map(|c| A3Tracker::new(c.a3)).collect();
    let mut pending: Option<PendingHandover> = None;
    let mut prev_pos = traj.position_at(t0);
    let mut rsrp = vec![0.0; cells.len()];

    for k in 0..=ticks {
        let t = t0 + k as f64 * tick_s;
        let pos = traj.position_at(t);
        if k > 0 {
            shadow.advance(prev_pos.distance(&pos));
        }
        prev_pos = pos;
        for (i, c) in cells.iter().enumerate() {
            rsrp[i] = compute_rsrp(c, pos, &spec.radio, shadow.value(i));
        }
        radio.push(RadioSample { time_s: t, rsrp_dbm: cells.iter().map(|c| c.id).zip(rsrp.iter().copied()).collect() });

        let current = *serving.get_or_insert_with(|| {
            // initial attach: strongest cell, first one on ties
            (0..cells.len()).fold(0, |best, i| if rsrp[i] > rsrp[best] { i } else { best })
        });

        if let Some(p) = &pending {
            if k >= p.execute_at_tick {
                let (src, dst) = (&cells[current], &cells[p.target]);
                sink.emit(t, ue, EventKind::HoSuccess, src, dst, rsrp[current], rsrp[p.target], Some(p.margin_db));
                handovers.push(HandoverRecord {
                    time_s: t,
                    ue_id: ue,
                    source_cell: src.id,
                    target_cell: dst.id,
                    outcome: HandoverOutcome::Success,
                    trigger_margin_db: p.margin_db,
                });
                serving = Some(p.target);
                pending = None;
                for (tr, c) in trackers.iter_mut().zip(&cells) {
                    *tr = A3Tracker::new(c.a3);
                }
            }
            continue;
        }

        // The serving cell's A3 parameters govern its neighbor relations.
        let mut best: Option<(usize, f64)> = None;
        for n in (0..cells.len()).filter(|&n| n != current) {
            let tracker = &mut trackers[n];
            if tracker.config() != &cells[current].a3 {
                *tracker = A3Tracker::new(cells[current].a3);
            }
            if let Some(margin) = tracker.observe(t, rsrp[n] - rsrp[current]) {
                if best.is_none_or(|(_, m)| margin > m) {
                    best = Some((n, margin));
                }
            }
        }
        if let Some((n, margin)) = best {
            let (src, dst) = (&cells[current], &cells[n]);
            sink.emit(t, ue, EventKind::A3Trigger, src, dst, rsrp[current], rsrp[n], Some(margin));
            sink.emit(t, ue, EventKind::HoAttempt, src, dst, rsrp[current], rsrp[n], None);
            pending = Some(PendingHandover { execute_at_tick: k + delay_ticks, target: n, margin_db: margin });
        }
    }

    let fps = compute_fps(&handovers, duration, spec.nominal_fps, spec.sim.interruption_ms);
    Ok(ScenarioOutput { events: sink.events, handovers, radio, fps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_sim::{count_ping_pongs, UeTrajectory};

    #[test]
    fn deterministic_for_same_spec() {
        let spec = ScenarioSpec::reference();
        let a = run_scenario(&spec).unwrap();
        let b = run_scenario(&spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seed_changes_trace() {
        let spec = ScenarioSpec::reference();
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(run_scenario(&spec).unwrap().radio, run_scenario(&other).unwrap().radio);
    }

    #[test]
    fn staying_near_home_cell_never_hands_over() {
        let mut spec = ScenarioSpec::reference();
        spec.trajectory = UeTrajectory {
            ue_id: 17,
            waypoints: vec![[0.0, 2.0, 1.0].into(), [60.0, 5.0, 3.0].into()],
        };
        let out = run_scenario(&spec).unwrap();
        assert!(out.handovers.is_empty());
        assert!(out.events.is_empty());
        assert!(out.fps.samples.iter().all(|s| s.fps == spec.nominal_fps));
    }

    #[test]
    fn one_sample_per_tick_and_one_fps_per_second() {
        let spec = ScenarioSpec::reference();
        let out = run_scenario(&spec).unwrap();
        assert_eq!(out.radio.len(), 9001);
        assert_eq!(out.fps.samples.len(), 90);
        assert!(out.radio.iter().all(|s| s.rsrp_dbm.len() == 2 && s.rsrp_dbm.iter().all(|(_, v)| v.is_finite())));
    }

    #[test]
    fn every_handover_has_trigger_attempt_success_triplet() {
        let out = run_scenario(&ScenarioSpec::reference()).unwrap();
        assert_eq!(out.events.len(), 3 * out.handovers.len());
        for (chunk, ho) in out.events.chunks(3).zip(&out.handovers) {
            assert_eq!(chunk[0].kind, EventKind::A3Trigger);
            assert_eq!(chunk[1].kind, EventKind::HoAttempt);
            assert_eq!(chunk[2].kind, EventKind::HoSuccess);
            assert!((chunk[2].time_s - chunk[0].time_s - 0.05).abs() < 1e-9);
            assert_eq!(chunk[2].time_s, ho.time_s);
            assert!(ho.trigger_margin_db > 0.0);
            assert_ne!(ho.source_cell, ho.target_cell);
        }
    }

    #[test]
    fn attaches_to_strongest_cell() {
        let mut spec = ScenarioSpec::reference();
        spec.radio.shadowing_sigma_db = 0.0;
        spec.trajectory = UeTrajectory {
            ue_id: 1,
            waypoints: vec![[0.0, 38.0, 0.0].into(), [10.0, 38.0, 0.0].into()],
        };
        let out = run_scenario(&spec).unwrap();
        assert!(out.handovers.is_empty());
        assert_eq!(count_ping_pongs(&out.handovers, 5.0), 0);
    }
}
