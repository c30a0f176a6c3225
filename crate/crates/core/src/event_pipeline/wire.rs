//! Raw-event wire format: one JSON document per event, newline-delimited
//! when streamed. Documents carry the normalized fields plus
//! `schema_version`.

use serde_json::{Map, Value};

use super::{EventSource, MalformedEvent, NormalizedEvent, RawEvent};

pub const WIRE_SCHEMA_VERSION: u64 = 1;

/// Serializes an event as one wire document (no trailing newline).
pub fn encode(event: &NormalizedEvent) -> String {
    serde_json::to_string(&to_payload(event)).expect("event serializes")
}

pub fn to_payload(event: &NormalizedEvent) -> Map<String, Value> {
    let mut map = match serde_json::to_value(event).expect("event serializes") {
        Value::Object(m) => m,
        _ => unreachable!("events serialize as objects"),
    };
    if let Some(Value::Object(extra)) = map.remove("extra") {
        for (k, v) in extra {
            map.entry(k).or_insert(v);
        }
    }
    map.insert("schema_version".into(), Value::from(WIRE_SCHEMA_VERSION));
    map
}

pub fn to_raw(event: &NormalizedEvent, source: EventSource, received_at_ms: u64) -> RawEvent {
    RawEvent { source, payload: to_payload(event), received_at_ms }
}

/// Parses one line. Blank lines yield `Ok(None)`.
pub fn decode_line(line: &str, source: EventSource, received_at_ms: u64) -> Result<Option<RawEvent>, MalformedEvent> {
    let line = line.trim();
    if line.is_empty() {
        return Ok(None);
    }
    let value: Value = serde_json::from_str(line)
        .map_err(|e| MalformedEvent { field: "document".into(), reason: e.to_string() })?;
    let payload = match value {
        Value::Object(m) => m,
        _ => return Err(MalformedEvent { field: "document".into(), reason: "expected a JSON object".into() }),
    };
    match payload.get("schema_version").and_then(Value::as_u64) {
        Some(WIRE_SCHEMA_VERSION) => {}
        Some(v) => {
            return Err(MalformedEvent { field: "schema_version".into(), reason: format!("unsupported version {v}") })
        }
        None => return Err(MalformedEvent { field: "schema_version".into(), reason: "missing".into() }),
    }
    Ok(Some(RawEvent { source, payload, received_at_ms }))
}

/// Splits a newline-delimited body into raw events, one result per
/// non-blank line.
pub fn decode_stream(body: &str, source: EventSource, received_at_ms: u64) -> Vec<Result<RawEvent, MalformedEvent>> {
    body.lines().filter_map(|l| decode_line(l, source, received_at_ms).transpose()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event_pipeline::normalize;
    use crate::ran_sim::{run_scenario, ScenarioSpec};
    use proptest::prelude::*;

    #[test]
    fn simulator_events_survive_the_wire() {
        let out = run_scenario(&ScenarioSpec::reference()).unwrap();
        let body: String = out.events.iter().map(|e| encode(e) + "\n").collect();
        let raws = decode_stream(&body, EventSource::Sim, 0);
        assert_eq!(raws.len(), out.events.len());
        for (raw, orig) in raws.into_iter().zip(&out.events) {
            let back = normalize(&raw.unwrap()).unwrap();
            assert_eq!(back.event_id, orig.event_id);
            assert_eq!(back.kind, orig.kind);
            let (a, b) = (back.trigger_margin_db, orig.trigger_margin_db);
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-9),
                (None, None) => {}
                other => panic!("margin mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn version_is_required() {
        assert!(decode_line("{\"event_id\":\"a\"}", EventSource::External, 0).is_err());
        assert!(decode_line("{\"schema_version\":2}", EventSource::External, 0).is_err());
        assert!(decode_line("not json", EventSource::External, 0).is_err());
        assert_eq!(decode_line("   ", EventSource::External, 0), Ok(None));
    }

    proptest! {
        #[test]
        fn encode_then_normalize_is_identity(
            t in 0.0f64..1e5, ue in 0u32..1000, margin in proptest::option::of(-10.0f64..10.0),
            s in -140.0f64..-40.0, n in -140.0f64..-40.0, k in 0usize..4,
        ) {
            let ev = NormalizedEvent {
                event_id: format!("id-{ue}-{k}"),
                time_s: t,
                ue_id: ue,
                kind: crate::event_pipeline::EventKind::ALL[k],
                source_cell: crate::ran_sim::CellId::new(30, 1),
                target_cell: crate::ran_sim::CellId::new(31, 2),
                rsrp_serving_dbm: s,
                rsrp_neighbor_dbm: n,
                trigger_margin_db: margin,
                extra: Default::default(),
            };
            let raw = decode_line(&encode(&ev), EventSource::External, 0).unwrap().unwrap();
            prop_assert_eq!(normalize(&raw).unwrap(), ev);
        }
    }
}
