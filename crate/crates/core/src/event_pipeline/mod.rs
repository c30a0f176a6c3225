//! Event normalization and the bounded batching queue between ingestion and
//! reasoning.
//!
//! A batch is released when the queue has been quiet for `quiescence_ms`
//! or when it holds at least `max_count` events; a count-triggered batch
//! takes exactly the `max_count` oldest events.

mod normalize;
mod queue;
pub mod wire;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ran_sim::CellId;

pub use normalize::normalize;
pub use queue::{Ack, EventPipeline, QuarantinedEvent, DEFAULT_HARD_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    A3Trigger,
    HoAttempt,
    HoSuccess,
    HoFailure,
}

impl EventKind {
    pub const ALL: [EventKind; 4] =
        [EventKind::A3Trigger, EventKind::HoAttempt, EventKind::HoSuccess, EventKind::HoFailure];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::A3Trigger => "A3_TRIGGER",
            EventKind::HoAttempt => "HO_ATTEMPT",
            EventKind::HoSuccess => "HO_SUCCESS",
            EventKind::HoFailure => "HO_FAILURE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventSource {
    Sim,
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub source: EventSource,
    pub payload: serde_json::Map<String, serde_json::Value>,
    pub received_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedEvent {
    pub event_id: String,
    pub time_s: f64,
    pub ue_id: u32,
    pub kind: EventKind,
    pub source_cell: CellId,
    pub target_cell: CellId,
    pub rsrp_serving_dbm: f64,
    pub rsrp_neighbor_dbm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trigger_margin_db: Option<f64>,
    /// Payload fields without a dedicated slot, kept for audit.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl NormalizedEvent {
    pub fn is_inter_gnb_handover(&self) -> bool {
        self.kind == EventKind::HoSuccess && self.source_cell.gnb_id != self.target_cell.gnb_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchPolicy {
    pub quiescence_ms: u64,
    pub max_count: usize,
}

impl Default for BatchPolicy {
    fn default() -> Self {
        Self { quiescence_ms: 2000, max_count: 50 }
    }
}

impl BatchPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.quiescence_ms == 0 {
            return Err("quiescence_ms must be > 0".into());
        }
        if self.max_count == 0 {
            return Err("max_count must be >= 1".into());
        }
        Ok(())
    }

    /// Longest polling period that still honors the quiescence window.
    pub fn poll_period_ms(&self) -> u64 {
        (self.quiescence_ms / 4).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TriggerReason {
    Quiescence,
    Count,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventBatch {
    pub batch_id: String,
    pub events: Vec<NormalizedEvent>,
    pub trigger_reason: TriggerReason,
    pub created_at_ms: u64,
    /// Ingestion time of the newest event in the batch.
    pub last_ingested_at_ms: u64,
}

impl EventBatch {
    /// UEs referenced by the batch, sorted.
    pub fn ue_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.events.iter().map(|e| e.ue_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("malformed event: field `{field}`: {reason}")]
pub struct MalformedEvent {
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("queue full ({cap} events); retry later")]
    QueueFull { cap: usize },
    #[error("duplicate event id {0}")]
    DuplicateEventId(String),
    #[error(transparent)]
    Malformed(#[from] MalformedEvent),
}
