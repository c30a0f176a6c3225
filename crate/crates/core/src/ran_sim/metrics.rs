use super::{FpsSample, FpsTrace, HandoverOutcome, HandoverRecord};

pub const DEFAULT_PING_PONG_WINDOW_S: f64 = 5.0;

/// Counts A→B / B→A handover pairs of the same UE that complete within
/// `window_s` of each other. Matching is greedy: each record is paired with
/// the earliest eligible later reversal, and is used at most once.
///
/// `handovers` must be time-ordered. Failed handovers are ignored.
pub fn count_ping_pongs(handovers: &[HandoverRecord], window_s: f64) -> usize {
    let hos: Vec<&HandoverRecord> =
        handovers.iter().filter(|h| h.outcome == HandoverOutcome::Success).collect();
    let mut used = vec![false; hos.len()];
    let mut pairs = 0;
    for i in 0..hos.len() {
        if used[i] {
            continue;
        }
        let first = hos[i];
        for j in i + 1..hos.len() {
            let dt = hos[j].time_s - first.time_s;
            if dt > window_s {
                break;
            }
            if used[j] || dt <= 0.0 {
                continue;
            }
            let back = hos[j];
            if back.ue_id == first.ue_id
                && back.source_cell == first.target_cell
                && back.target_cell == first.source_cell
            {
                used[i] = true;
                used[j] = true;
                pairs += 1;
                break;
            }
        }
    }
    pairs
}

/// Application-layer FPS proxy: each handover blanks uplink frames for
/// `interruption_ms` from its completion time. Second `k` reports
/// `nominal * (1 - blanked fraction of [k, k+1))`. Overlapping interruptions
/// are not double counted.
pub fn compute_fps(
    handovers: &[HandoverRecord],
    duration_s: f64,
    nominal_fps: f64,
    interruption_ms: u32,
) -> FpsTrace {
    let seconds = duration_s.max(1.0).floor() as u32;
    let gap = f64::from(interruption_ms) / 1000.0;
    let mut intervals: Vec<(f64, f64)> = handovers.iter().map(|h| (h.time_s, h.time_s + gap)).collect();
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (s, e) in intervals {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let samples = (0..seconds)
        .map(|k| {
            let (lo, hi) = (f64::from(k), f64::from(k) + 1.0);
            let blanked: f64 = merged.iter().map(|&(s, e)| (e.min(hi) - s.max(lo)).max(0.0)).sum();
            let fps = (nominal_fps * (1.0 - blanked.min(1.0))).clamp(0.0, nominal_fps);
            FpsSample { second: k, fps }
        })
        .collect();
    FpsTrace { nominal_fps, samples }
}

/// Population variance of the FPS samples whose second lies in `[from_s, to_s)`.
pub fn fps_variance(trace: &FpsTrace, from_s: f64, to_s: f64) -> f64 {
    let xs: Vec<f64> = trace
        .samples
        .iter()
        .filter(|s| f64::from(s.second) >= from_s && f64::from(s.second) < to_s)
        .map(|s| s.fps)
        .collect();
    if xs.is_empty() {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_sim::CellId;

    const A: CellId = CellId::new(30, 1);
    const B: CellId = CellId::new(31, 1);

    fn ho(t: f64, from: CellId, to: CellId) -> HandoverRecord {
        HandoverRecord {
            time_s: t,
            ue_id: 17,
            source_cell: from,
            target_cell: to,
            outcome: HandoverOutcome::Success,
            trigger_margin_db: 0.5,
        }
    }

    #[test]
    fn single_pair_inside_window() {
        assert_eq!(count_ping_pongs(&[ho(10.0, A, B), ho(12.0, B, A)], 5.0), 1);
    }

    #[test]
    fn pair_outside_window() {
        assert_eq!(count_ping_pongs(&[ho(10.0, A, B), ho(17.0, B, A)], 5.0), 0);
    }

    #[test]
    fn alternating_four_gives_two_pairs() {
        let hs = [ho(1.0, A, B), ho(2.0, B, A), ho(3.0, A, B), ho(4.0, B, A)];
        assert_eq!(count_ping_pongs(&hs, 5.0), 2);
    }

    #[test]
    fn other_ue_does_not_pair() {
        let mut back = ho(12.0, B, A);
        back.ue_id = 18;
        assert_eq!(count_ping_pongs(&[ho(10.0, A, B), back], 5.0), 0);
    }

    #[test]
    fn no_handovers_full_rate() {
        let t = compute_fps(&[], 10.0, 30.0, 500);
        assert_eq!(t.samples.len(), 10);
        assert!(t.samples.iter().all(|s| s.fps == 30.0));
    }

    #[test]
    fn half_second_blank_halves_the_rate() {
        let t = compute_fps(&[ho(5.0, A, B)], 10.0, 30.0, 500);
        assert_eq!(t.samples[5].fps, 15.0);
        assert_eq!(t.samples[4].fps, 30.0);
        assert_eq!(t.samples[6].fps, 30.0);
    }

    #[test]
    fn interruption_straddling_a_second_boundary_splits() {
        let t = compute_fps(&[ho(5.75, A, B)], 10.0, 30.0, 500);
        assert!((t.samples[5].fps - 22.5).abs() < 1e-9);
        assert!((t.samples[6].fps - 22.5).abs() < 1e-9);
    }

    #[test]
    fn overlapping_interruptions_are_merged() {
        let t = compute_fps(&[ho(5.0, A, B), ho(5.25, B, A)], 10.0, 30.0, 500);
        assert!((t.samples[5].fps - 30.0 * 0.25).abs() < 1e-9);
    }

    #[test]
    fn variance_of_constant_trace_is_zero() {
        let t = compute_fps(&[], 10.0, 30.0, 500);
        assert_eq!(fps_variance(&t, 0.0, 10.0), 0.0);
        let t = compute_fps(&[ho(5.0, A, B)], 10.0, 30.0, 500);
        // nine samples at 30 and one at 15
        let mean = (9.0 * 30.0 + 15.0) / 10.0;
        let var = (9.0 * (30.0f64 - mean).powi(2) + (15.0f64 - mean).powi(2)) / 10.0;
        assert!((fps_variance(&t, 0.0, 10.0) - var).abs() < 1e-9);
    }
}
