//! Snapshot persistence: a metadata header line followed by one record per
//! line. Log lines reuse the event wire fields plus `schema_version`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LogRecord, Stores, TelemetryError, TelemetryStore};
use crate::ran_sim::RadioSample;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    store: String,
    schema_version: u32,
    logs: usize,
    radio_samples: usize,
    fps_samples: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Line {
    Log {
        schema_version: u32,
        #[serde(flatten)]
        log: LogRecord,
    },
    Rsrp(RadioSample),
    Fps { time_s: f64, fps: f64 },
}

impl TelemetryStore {
    pub fn to_ndjson(&self) -> String {
        let s = self.read();
        let header = Header {
            store: "telemetry".into(),
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            logs: s.logs.len(),
            radio_samples: s.radio.len(),
            fps_samples: s.fps.len(),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        let lines = s
            .logs
            .iter()
            .map(|r| Line::Log { schema_version: SNAPSHOT_SCHEMA_VERSION, log: r.clone() })
            .chain(s.radio.iter().cloned().map(Line::Rsrp))
            .chain(s.fps.iter().map(|&(time_s, fps)| Line::Fps { time_s, fps }));
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self, TelemetryError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(TelemetryError::Snapshot { line: 1, reason: "empty snapshot".into() })?;
        let header: Header =
            serde_json::from_str(first).map_err(|e| TelemetryError::Snapshot { line: 1, reason: e.to_string() })?;
        if header.store != "telemetry" || header.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return Err(TelemetryError::Snapshot { line: 1, reason: "unsupported snapshot header".into() });
        }
        let mut stores = Stores::default();
        for (i, text) in lines {
            let line: Line = serde_json::from_str(text)
                .map_err(|e| TelemetryError::Snapshot { line: i + 1, reason: e.to_string() })?;
            match line {
                Line::Log { log, .. } => stores.logs.push(log),
                Line::Rsrp(r) => stores.radio.push(r),
                Line::Fps { time_s, fps } => stores.fps.push((time_s, fps)),
            }
        }
        if (stores.logs.len(), stores.radio.len(), stores.fps.len())
            != (header.logs, header.radio_samples, header.fps_samples)
        {
            return Err(TelemetryError::Snapshot { line: 1, reason: "record counts do not match header".into() });
        }
        Ok(Self { inner: std::sync::RwLock::new(stores) })
    }

    pub fn save(&self, path: &Path) -> Result<(), TelemetryError> {
        std::fs::write(path, self.to_ndjson())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TelemetryError> {
        Self::from_ndjson(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ran_sim::{run_scenario, ScenarioSpec};
    use crate::telemetry::{LogQuery, TimeRange};

    #[test]
    fn snapshot_round_trip() {
        let out = run_scenario(&ScenarioSpec::reference()).unwrap();
        let store = TelemetryStore::new();
        for e in &out.events {
            store.append_log(LogRecord::from_event(e));
        }
        store.append_radio(&out.radio[..500], 0.0);
        store.append_fps(&out.fps, 0.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("telemetry.ndjson");
        store.save(&path).unwrap();
        let back = TelemetryStore::load(&path).unwrap();
        assert_eq!(*back.read(), *store.read());
        let q = LogQuery { ue_id: Some(17), time_range: TimeRange::new(0.0, 100.0), kinds: None, limit: 500 };
        assert_eq!(back.query_logs(&q).unwrap(), store.query_logs(&q).unwrap());
    }

    #[test]
    fn corrupt_snapshot_reports_line() {
        let store = TelemetryStore::new();
        let mut text = store.to_ndjson();
        text.push_str("{\"record\":\"bogus\"}\n");
        match TelemetryStore::from_ndjson(&text) {
            Err(TelemetryError::Snapshot { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(TelemetryStore::from_ndjson("").is_err());
    }
}
