mod common;

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use rapp_core::event_pipeline::{BatchPolicy, EventKind, EventPipeline, TriggerReason};
use rapp_core::ran_sim::{
    compute_fps, count_ping_pongs, evaluate_a3, run_scenario, A3Config, CellId, HandoverOutcome, HandoverRecord,
    RadioSample, ScenarioSpec, ALLOWED_TTT_MS,
};

const SERVING: CellId = GNB30;
const NEIGHBOR: CellId = GNB31;

fn samples(times_ms: &[u64], diffs: &[f64]) -> Vec<RadioSample> {
    times_ms
        .iter()
        .zip(diffs)
        .map(|(&t, &d)| RadioSample { time_s: t as f64 / 1000.0, rsrp_dbm: vec![(SERVING, 0.0), (NEIGHBOR, d)] })
        .collect()
}

fn triggers(times_ms: &[u64], diffs: &[f64], cfg: &A3Config) -> Vec<(usize, f64)> {
    let trace = samples(times_ms, diffs);
    evaluate_a3(&trace, SERVING, NEIGHBOR, cfg)
        .unwrap()
        .into_iter()
        .map(|t| (times_ms.iter().position(|&x| x as f64 / 1000.0 == t.time_s).unwrap(), t.margin_db))
        .collect()
}

fn half_db(max_steps: i32) -> impl Strategy<Value = f64> {
    (-max_steps..=max_steps).prop_map(|s| f64::from(s) * 0.5)
}

fn ttt() -> impl Strategy<Value = u32> {
    (0..ALLOWED_TTT_MS.len()).prop_map(|i| ALLOWED_TTT_MS[i])
}

/// Piecewise-constant trace on half-dB steps, so thresholds are hit exactly.
fn stepped_trace() -> impl Strategy<Value = (Vec<u64>, Vec<f64>)> {
    (1u64..=10, prop::collection::vec((half_db(16), 1usize..40), 1..40)).prop_map(|(period, segs)| {
        let diffs: Vec<f64> = segs.iter().flat_map(|&(d, len)| std::iter::repeat_n(d, len)).collect();
        let times = (0..diffs.len() as u64).map(|i| i * period).collect();
        (times, diffs)
    })
}

/// Alternating two-cell handover chains for a few UEs, merged in time order.
fn handover_chains() -> impl Strategy<Value = Vec<HandoverRecord>> {
    prop::collection::vec((0u32..3, 1u32..80), 0..40).prop_map(|steps| {
        let mut serving = [GNB30; 3];
        let mut clock = [0u32; 3];
        let mut hos: Vec<HandoverRecord> = steps
            .into_iter()
            .map(|(ue, gap)| {
                let u = ue as usize;
                clock[u] += gap;
                let from = serving[u];
                let to = if from == GNB30 { GNB31 } else { GNB30 };
                serving[u] = to;
                HandoverRecord {
                    time_s: f64::from(clock[u]) * 0.1,
                    ue_id: ue,
                    source_cell: from,
                    target_cell: to,
                    outcome: HandoverOutcome::Success,
                    trigger_margin_db: 0.5,
                }
            })
            .collect();
        hos.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        hos
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn a3_matches_brute_force(seed in any::<u64>(), n in 1usize..3000, period in 1u64..=10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = random_a3(&mut rng);
        let (times, diffs) = random_diff_trace(&mut rng, &cfg, n, period);
        prop_assert_eq!(triggers(&times, &diffs, &cfg), a3_oracle(&times, &diffs, &cfg));
    }

    #[test]
    fn a3_matches_brute_force_on_steps((times, diffs) in stepped_trace(), off in half_db(6), hys in 0u32..6, t in ttt()) {
        let cfg = A3Config::new(off, f64::from(hys) * 0.5, t);
        prop_assert_eq!(triggers(&times, &diffs, &cfg), a3_oracle(&times, &diffs, &cfg));
    }

    #[test]
    fn more_hysteresis_never_adds_triggers(
        (times, diffs) in stepped_trace(), off in half_db(6), h1 in 0u32..8, extra in 0u32..8, t in ttt()
    ) {
        let lo = A3Config::new(off, f64::from(h1) * 0.5, t);
        let hi = A3Config::new(off, f64::from(h1 + extra) * 0.5, t);
        prop_assert!(triggers(&times, &diffs, &hi).len() <= triggers(&times, &diffs, &lo).len());
    }

    #[test]
    fn longer_ttt_never_adds_triggers((times, diffs) in stepped_trace(), off in half_db(6), h in 0u32..8, a in ttt(), b in ttt()) {
        let (short, long) = (a.min(b), a.max(b));
        let hys = f64::from(h) * 0.5;
        let n_short = triggers(&times, &diffs, &A3Config::new(off, hys, short)).len();
        let n_long = triggers(&times, &diffs, &A3Config::new(off, hys, long)).len();
        prop_assert!(n_long <= n_short);
    }

    /// Offset and hysteresis moved together so the entering threshold rises
    /// while the leaving threshold does not.
    #[test]
    fn stricter_entry_with_same_exit_never_adds_triggers(
        (times, diffs) in stepped_trace(), off in half_db(6), h in 0u32..6, k in 0u32..4, t in ttt()
    ) {
        let hys = f64::from(h) * 0.5;
        let step = f64::from(k) * 0.5;
        let base = A3Config::new(off, hys, t);
        let strict = A3Config::new(off + step, hys + step, t);
        prop_assert!(triggers(&times, &diffs, &strict).len() <= triggers(&times, &diffs, &base).len());
    }

    #[test]
    fn ping_pongs_grow_with_the_window(hos in handover_chains(), w1 in 0.0f64..8.0, dw in 0.0f64..8.0) {
        prop_assert!(count_ping_pongs(&hos, w1) <= count_ping_pongs(&hos, w1 + dw));
        prop_assert!(2 * count_ping_pongs(&hos, w1 + dw) <= hos.len());
    }

    #[test]
    fn fps_stays_within_bounds(hos in handover_chains(), duration in 1.0f64..120.0, nominal in 1.0f64..60.0, gap in 0u32..2000) {
        let fps = compute_fps(&hos, duration, nominal, gap);
        prop_assert_eq!(fps.samples.len(), duration.floor() as usize);
        prop_assert!(fps.samples.iter().all(|s| (0.0..=nominal).contains(&s.fps)));
        let quiet = compute_fps(&[], duration, nominal, gap);
        let total: f64 = quiet.samples.iter().map(|s| s.fps).sum();
        prop_assert!((total - nominal * duration.floor()).abs() < 1e-9);
    }

    #[test]
    fn batching_conserves_events(
        arrivals in prop::collection::vec((0u64..3000, any::<bool>(), 0u8..10), 1..300),
        q in 1u64..5000,
        max_count in 1usize..40,
    ) {
        let policy = BatchPolicy { quiescence_ms: q, max_count };
        let pipeline = EventPipeline::default();
        let mut now = 0;
        let mut accepted = HashSet::new();
        let mut batches = Vec::new();
        for (i, (gap, malformed, poll_every)) in arrivals.iter().enumerate() {
            now += gap;
            let mut raw = rapp_core::event_pipeline::wire::to_raw(
                &event(&format!("e{i}"), 1, now as f64 / 1000.0, EventKind::HoSuccess, GNB30, GNB31),
                rapp_core::event_pipeline::EventSource::External,
                now,
            );
            if *malformed {
                raw.payload.remove("ue_id");
            }
            if pipeline.submit_raw(raw, now).is_ok() {
                accepted.insert(format!("e{i}"));
            }
            if poll_every % 3 == 0 {
                batches.extend(pipeline.poll_batch(&policy, now));
            }
        }
        loop {
            now += policy.poll_period_ms();
            match pipeline.poll_batch(&policy, now) {
                Some(b) => batches.push(b),
                None if pipeline.depth() == 0 => break,
                None => {}
            }
        }
        let mut seen = HashSet::new();
        for b in &batches {
            prop_assert!(!b.events.is_empty() && b.events.len() <= max_count);
            if b.trigger_reason == TriggerReason::Quiescence {
                prop_assert!(b.created_at_ms - b.last_ingested_at_ms >= q);
            } else {
                prop_assert_eq!(b.events.len(), max_count);
            }
            for e in &b.events {
                prop_assert!(seen.insert(e.event_id.clone()), "event {} batched twice", e.event_id);
            }
        }
        prop_assert_eq!(&seen, &accepted);
        prop_assert_eq!(seen.len() + pipeline.quarantined().len(), arrivals.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adversarial_sessions_terminate_and_stay_gated(seed in any::<u64>(), cap in 0u32..7) {
        let out = adversarial_session(seed, cap);
        prop_assert!(out.violations.is_empty(), "{:?}", out.violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_is_a_function_of_the_spec(seed in 0u64..1000) {
        let mut spec = ScenarioSpec::reference();
        spec.seed = seed;
        let a = run_scenario(&spec).unwrap();
        let b = run_scenario(&spec).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }
}
