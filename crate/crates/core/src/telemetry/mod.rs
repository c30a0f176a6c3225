//! In-process log and metric stores that agents interrogate through gated
//! tools.
//!
//! Both stores are append-only. Time ranges are half-open `[from_s, to_s)`.
//! Responses are bounded: at most [`MAX_LOG_LIMIT`] log records and
//! [`MAX_METRIC_POINTS`] metric points per query.

mod snapshot;

use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_pipeline::{EventKind, NormalizedEvent};
use crate::ran_sim::{CellId, FpsTrace, RadioSample};

pub use snapshot::SNAPSHOT_SCHEMA_VERSION;

pub const MAX_LOG_LIMIT: usize = 500;
pub const MAX_METRIC_POINTS: usize = 5000;
pub const MIN_DOWNSAMPLE_S: f64 = 0.1;
pub const MAX_DETAIL_BYTES: usize = 1024;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("invalid query: `{field}`: {reason}")]
    InvalidQuery { field: &'static str, reason: String },
    #[error("unknown series `{0}`")]
    UnknownSeries(String),
    #[error("snapshot line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> TelemetryError {
    TelemetryError::InvalidQuery { field, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub event_id: String,
    pub time_s: f64,
    pub ue_id: u32,
    pub kind: EventKind,
    pub source_cell: CellId,
    pub target_cell: CellId,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_margin_db: Option<f64>,
}

impl LogRecord {
    pub fn from_event(e: &NormalizedEvent) -> Self {
        let mut detail = format!(
            "{} {} -> {}, serving {:.2} dBm, neighbor {:.2} dBm",
            e.kind.as_str(),
            e.source_cell,
            e.target_cell,
            e.rsrp_serving_dbm,
            e.rsrp_neighbor_dbm
        );
        if let Some(m) = e.trigger_margin_db {
            detail.push_str(&format!(", margin {m:.2} dB"));
        }
        Self {
            event_id: e.event_id.clone(),
            time_s: e.time_s,
            ue_id: e.ue_id,
            kind: e.kind,
            source_cell: e.source_cell,
            target_cell: e.target_cell,
            detail: clip_detail(detail),
            trigger_margin_db: e.trigger_margin_db,
        }
    }
}

fn clip_detail(mut s: String) -> String {
    if s.len() > MAX_DETAIL_BYTES {
        let mut cut = MAX_DETAIL_BYTES;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub from_s: f64,
    pub to_s: f64,
}

impl TimeRange {
    pub fn new(from_s: f64, to_s: f64) -> Self {
        Self { from_s, to_s }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.from_s && t < self.to_s
    }

    fn validate(&self) -> Result<(), TelemetryError> {
        if !self.from_s.is_finite() || !self.to_s.is_finite() {
            return Err(invalid("time_range", "bounds must be finite"));
        }
        if self.from_s > self.to_s {
            return Err(invalid("time_range", "from_s must be <= to_s"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ue_id: Option<u32>,
    pub time_range: TimeRange,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinds: Option<Vec<EventKind>>,
    pub limit: usize,
}

impl LogQuery {
    pub fn validate(&self) -> Result<(), TelemetryError> {
        self.time_range.validate()?;
        if self.limit == 0 || self.limit > MAX_LOG_LIMIT {
            return Err(invalid("limit", format!("must be in [1, {MAX_LOG_LIMIT}]")));
        }
        Ok(())
    }

    pub fn matches(&self, r: &LogRecord) -> bool {
        self.time_range.contains(r.time_s)
            && self.ue_id.is_none_or(|u| u == r.ue_id)
            && self.kinds.as_ref().is_none_or(|ks| ks.contains(&r.kind))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogQueryResult {
    pub records: Vec<LogRecord>,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetricSeries {
    Rsrp,
    Fps,
}

impl MetricSeries {
    pub fn parse(s: &str) -> Result<Self, TelemetryError> {
        match s {
            "RSRP" => Ok(Self::Rsrp),
            "FPS" => Ok(Self::Fps),
            other => Err(TelemetryError::UnknownSeries(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricQuery {
    /// `"RSRP"` or `"FPS"`.
    pub series: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell: Option<CellId>,
    pub time_range: TimeRange,
    pub downsample_s: f64,
}

impl MetricQuery {
    pub fn validate(&self) -> Result<MetricSeries, TelemetryError> {
        let series = MetricSeries::parse(&self.series)?;
        self.time_range.validate()?;
        if !self.downsample_s.is_finite() || self.downsample_s < MIN_DOWNSAMPLE_S {
            return Err(invalid("downsample_s", format!("must be >= {MIN_DOWNSAMPLE_S}")));
        }
        let span = self.time_range.to_s - self.time_range.from_s;
        if (span / self.downsample_s).ceil() > MAX_METRIC_POINTS as f64 {
            return Err(invalid("downsample_s", format!("range would exceed {MAX_METRIC_POINTS} points")));
        }
        if series == MetricSeries::Rsrp && self.cell.is_none() {
            return Err(invalid("cell", "required for RSRP"));
        }
        Ok(series)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricPoint {
    pub time_s: f64,
    pub value: f64,
}

#[derive(Debug, Default, Clone, PartialEq, Serialize, Deserialize)]
struct Stores {
    logs: Vec<LogRecord>,
    radio: Vec<RadioSample>,
    /// (start of second, fps)
    fps: Vec<(f64, f64)>,
}

/// Log and metric stores behind one reader/writer lock, so a query always
/// sees a consistent snapshot.
#[derive(Debug, Default)]
pub struct TelemetryStore {
    inner: RwLock<Stores>,
}

fn insert_sorted<T>(v: &mut Vec<T>, item: T, time: impl Fn(&T) -> f64) {
    let t = time(&item);
    let at = v.partition_point(|x| time(x) <= t);
    v.insert(at, item);
}

impl TelemetryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Stores> {
        self.inner.read().expect("telemetry lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Stores> {
        self.inner.write().expect("telemetry lock poisoned")
    }

    /// Returns the number of stored log records after the append.
    pub fn append_log(&self, mut record: LogRecord) -> usize {
        record.detail = clip_detail(record.detail);
        let mut s = self.write();
        insert_sorted(&mut s.logs, record, |r| r.time_s);
        s.logs.len()
    }

    /// Appends radio samples shifted by `offset_s`.
    pub fn append_radio(&self, samples: &[RadioSample], offset_s: f64) {
        let mut s = self.write();
        for r in samples {
            let shifted = RadioSample { time_s: r.time_s + offset_s, rsrp_dbm: r.rsrp_dbm.clone() };
            insert_sorted(&mut s.radio, shifted, |r| r.time_s);
        }
    }

    /// Appends an FPS trace whose second 0 starts at `offset_s`.
    pub fn append_fps(&self, trace: &FpsTrace, offset_s: f64) {
        let mut s = self.write();
        for sample in &trace.samples {
            insert_sorted(&mut s.fps, (f64::from(sample.second) + offset_s, sample.fps), |p| p.0);
        }
    }

    pub fn log_count(&self) -> usize {
        self.read().logs.len()
    }

    pub fn query_logs(&self, q: &LogQuery) -> Result<LogQueryResult, TelemetryError> {
        q.validate()?;
        let s = self.read();
        let start = s.logs.partition_point(|r| r.time_s < q.time_range.from_s);
        let mut records = Vec::new();
        let mut truncated = false;
        for r in s.logs[start..].iter().take_while(|r| r.time_s < q.time_range.to_s) {
            if q.matches(r) {
                if records.len() == q.limit {
                    truncated = true;
                    break;
                }
                records.push(r.clone());
            }
        }
        Ok(LogQueryResult { records, truncated })
    }

    pub fn query_metrics(&self, q: &MetricQuery) -> Result<Vec<MetricPoint>, TelemetryError> {
        let series = q.validate()?;
        let s = self.read();
        let samples: Vec<(f64, f64)> = match series {
            MetricSeries::Fps => s.fps.iter().copied().filter(|(t, _)| q.time_range.contains(*t)).collect(),
            MetricSeries::Rsrp => {
                let cell = q.cell.expect("validated");
                let vals: Vec<(f64, f64)> = s
                    .radio
                    .iter()
                    .filter(|r| q.time_range.contains(r.time_s))
                    .filter_map(|r| r.rsrp(cell).map(|v| (r.time_s, v)))
                    .collect();
                if s.radio.first().is_some_and(|r| r.rsrp(cell).is_none()) {
                    return Err(invalid("cell", format!("no series for {cell}")));
                }
                vals
            }
        };
        Ok(downsample(&samples, q.time_range.from_s, q.downsample_s))
    }
}

/// Averages time-ordered samples into buckets of width `step` anchored at
/// `from`. Empty buckets produce no point.
fn downsample(samples: &[(f64, f64)], from: f64, step: f64) -> Vec<MetricPoint> {
    let mut out: Vec<MetricPoint> = Vec::new();
    let mut current: Option<(i64, f64, usize)> = None;
    for &(t, v) in samples {
        // tolerate tick times that land a hair below a bucket edge
        let bucket = ((t - from) / step + 1e-9).floor() as i64;
        match &mut current {
            Some((b, sum, n)) if *b == bucket => {
                *sum += v;
                *n += 1;
            }
            _ => {
                if let Some((b, sum, n)) = current.take() {
                    out.push(MetricPoint { time_s: from + b as f64 * step, value: sum / n as f64 });
                }
                current = Some((bucket, v, 1));
            }
        }
    }
    if let Some((b, sum, n)) = current {
        out.push(MetricPoint { time_s: from + b as f64 * step, value: sum / n as f64 });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, ue: u32, kind: EventKind) -> LogRecord {
        LogRecord {
            event_id: format!("e-{t}-{ue}"),
            time_s: t,
            ue_id: ue,
            kind,
            source_cell: CellId::new(30, 1),
            target_cell: CellId::new(31, 1),
            detail: String::new(),
            trigger_margin_db: None,
        }
    }

    fn q(from: f64, to: f64, limit: usize) -> LogQuery {
        LogQuery { ue_id: None, time_range: TimeRange::new(from, to), kinds: None, limit }
    }

    #[test]
    fn read_your_writes_and_truncation() {
        let s = TelemetryStore::new();
        s.append_log(rec(2.0, 1, EventKind::HoSuccess));
        s.append_log(rec(1.0, 1, EventKind::A3Trigger));
        let all = s.query_logs(&q(0.0, 10.0, 10)).unwrap();
        assert_eq!(all.records.len(), 2);
        assert_eq!(all.records[0].time_s, 1.0);
        assert!(!all.truncated);
        let one = s.query_logs(&q(0.0, 10.0, 1)).unwrap();
        assert_eq!(one.records.len(), 1);
        assert!(one.truncated);
    }

    #[test]
    fn limit_and_range_validation() {
        let s = TelemetryStore::new();
        let err = s.query_logs(&q(0.0, 1.0, 501)).unwrap_err();
        assert!(matches!(err, TelemetryError::InvalidQuery { field: "limit", .. }));
        assert!(s.query_logs(&q(0.0, 1.0, 0)).is_err());
        assert!(s.query_logs(&q(2.0, 1.0, 5)).is_err());
        s.append_log(rec(0.0, 1, EventKind::HoSuccess));
        assert!(s.query_logs(&q(0.0, 0.0, 5)).unwrap().records.is_empty());
    }

    #[test]
    fn detail_is_clipped_on_char_boundary() {
        let s = TelemetryStore::new();
        let mut r = rec(1.0, 1, EventKind::HoSuccess);
        r.detail = "é".repeat(700);
        s.append_log(r);
        let got = s.query_logs(&q(0.0, 2.0, 1)).unwrap();
        assert!(got.records[0].detail.len() <= MAX_DETAIL_BYTES);
    }

    #[test]
    fn metric_query_errors() {
        let s = TelemetryStore::new();
        let base = MetricQuery {
            series: "FPS".into(),
            cell: None,
            time_range: TimeRange::new(0.0, 10.0),
            downsample_s: 1.0,
        };
        assert!(s.query_metrics(&base).unwrap().is_empty());
        let bad = MetricQuery { series: "RSRQ".into(), ..base.clone() };
        assert!(matches!(s.query_metrics(&bad), Err(TelemetryError::UnknownSeries(_))));
        let tiny = MetricQuery { downsample_s: 0.05, ..base.clone() };
        assert!(s.query_metrics(&tiny).is_err());
        let huge = MetricQuery { time_range: TimeRange::new(0.0, 1000.0), downsample_s: 0.1, ..base.clone() };
        assert!(s.query_metrics(&huge).is_err());
        let no_cell = MetricQuery { series: "RSRP".into(), ..base };
        assert!(s.query_metrics(&no_cell).is_err());
    }

    #[test]
    fn downsample_averages_buckets() {
        let pts = downsample(&[(0.0, 1.0), (0.5, 3.0), (1.0, 10.0), (3.2, 4.0)], 0.0, 1.0);
        assert_eq!(
            pts,
            vec![
                MetricPoint { time_s: 0.0, value: 2.0 },
                MetricPoint { time_s: 1.0, value: 10.0 },
                MetricPoint { time_s: 3.0, value: 4.0 },
            ]
        );
    }
}
