use serde_json::{Map, Value};

use super::{EventKind, MalformedEvent, NormalizedEvent, RawEvent};
use crate::ran_sim::{A3Config, CellId};

fn malformed(field: &str, reason: impl Into<String>) -> MalformedEvent {
    MalformedEvent { field: field.to_string(), reason: reason.into() }
}

fn take<'a>(p: &'a Map<String, Value>, field: &str) -> Result<&'a Value, MalformedEvent> {
    p.get(field).ok_or_else(|| malformed(field, "missing"))
}

fn finite(p: &Map<String, Value>, field: &str) -> Result<f64, MalformedEvent> {
    match take(p, field)?.as_f64() {
        Some(v) if v.is_finite() => Ok(v),
        _ => Err(malformed(field, "expected a finite number")),
    }
}

fn small_uint(v: &Value, field: &str) -> Result<u32, MalformedEvent> {
    v.as_u64()
        .and_then(|n| u32::try_from(n).ok())
        .ok_or_else(|| malformed(field, "expected an unsigned 32-bit integer"))
}

fn cell(p: &Map<String, Value>, field: &str) -> Result<CellId, MalformedEvent> {
    let obj = take(p, field)?.as_object().ok_or_else(|| malformed(field, "expected {gnb_id, cell_id}"))?;
    if obj.len() != 2 {
        return Err(malformed(field, "expected exactly {gnb_id, cell_id}"));
    }
    let gnb = obj.get("gnb_id").ok_or_else(|| malformed(field, "missing gnb_id"))?;
    let c = obj.get("cell_id").ok_or_else(|| malformed(field, "missing cell_id"))?;
    Ok(CellId::new(small_uint(gnb, field)?, small_uint(c, field)?))
}

const KNOWN: [&str; 10] = [
    "event_id",
    "time_s",
    "ue_id",
    "kind",
    "source_cell",
    "target_cell",
    "rsrp_serving_dbm",
    "rsrp_neighbor_dbm",
    "trigger_margin_db",
    "schema_version",
];

/// Maps a raw payload onto a [`NormalizedEvent`].
///
/// For `A3_TRIGGER` events that carry an `a3` configuration snapshot, the
/// trigger margin is recomputed as `(neighbor - serving) - (offset + hysteresis)`.
/// Fields without a dedicated slot (including the snapshot) go to `extra`.
pub fn normalize(raw: &RawEvent) -> Result<NormalizedEvent, MalformedEvent> {
    let p = &raw.payload;
    if p.is_empty() {
        return Err(malformed("payload", "empty"));
    }
    let event_id = match take(p, "event_id")? {
        Value::String(s) if !s.is_empty() => s.clone(),
        _ => return Err(malformed("event_id", "expected a non-empty string")),
    };
    let time_s = finite(p, "time_s")?;
    if time_s < 0.0 {
        return Err(malformed("time_s", "must be >= 0"));
    }
    let ue_id = small_uint(take(p, "ue_id")?, "ue_id")?;
    let kind = take(p, "kind")?
        .as_str()
        .and_then(EventKind::parse)
        .ok_or_else(|| malformed("kind", "unknown event kind"))?;
    let source_cell = cell(p, "source_cell")?;
    let target_cell = cell(p, "target_cell")?;
    let rsrp_serving_dbm = finite(p, "rsrp_serving_dbm")?;
    let rsrp_neighbor_dbm = finite(p, "rsrp_neighbor_dbm")?;

    let snapshot = match p.get("a3") {
        Some(v) => Some(
            serde_json::from_value::<A3Config>(v.clone()).map_err(|e| malformed("a3", e.to_string()))?,
        ),
        None => None,
    };
    let trigger_margin_db = match (kind, snapshot) {
        (EventKind::A3Trigger, Some(a3)) => {
            Some((rsrp_neighbor_dbm - rsrp_serving_dbm) - a3.entering_threshold_db())
        }
        _ => match p.get("trigger_margin_db") {
            None | Some(Value::Null) => None,
            Some(_) => Some(finite(p, "trigger_margin_db")?),
        },
    };

    let extra = p
        .iter()
        .filter(|(k, _)| !KNOWN.contains(&k.as_str()))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();

    Ok(NormalizedEvent {
        event_id,
        time_s,
        ue_id,
        kind,
        source_cell,
        target_cell,
        rsrp_serving_dbm,
        rsrp_neighbor_dbm,
        trigger_margin_db,
        extra,
    })
}
