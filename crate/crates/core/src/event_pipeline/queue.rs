use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{
    normalize, BatchPolicy, EventBatch, IngestError, MalformedEvent, NormalizedEvent, RawEvent,
    TriggerReason,
};
use crate::audit::{Actor, AuditAction, AuditLog};

pub const DEFAULT_HARD_CAP: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub depth: usize,
}

/// A raw event that failed normalization. Kept for audit, never batched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarantinedEvent {
    pub raw: RawEvent,
    pub field: String,
    pub reason: String,
    pub quarantined_at_ms: u64,
}

struct Queued {
    event: NormalizedEvent,
    ingested_at_ms: u64,
}

#[derive(Default)]
struct Inner {
    queue: VecDeque<Queued>,
    last_ingest_ms: Option<u64>,
    seen: HashSet<String>,
    quarantine: Vec<QuarantinedEvent>,
    batches: u64,
}

/// In-process event queue. Ingest and poll may run on different threads;
/// a poll drains under the same lock ingest appends under, so no event can
/// be observed by two batches.
pub struct EventPipeline {
    inner: Mutex<Inner>,
    hard_cap: usize,
    audit: Option<Arc<AuditLog>>,
}

impl std::fmt::Debug for EventPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventPipeline").field("depth", &self.depth()).field("hard_cap", &self.hard_cap).finish()
    }
}

impl Default for EventPipeline {
    fn default() -> Self {
        Self::new(DEFAULT_HARD_CAP)
    }
}

impl EventPipeline {
    pub fn new(hard_cap: usize) -> Self {
        Self { inner: Mutex::new(Inner::default()), hard_cap: hard_cap.max(1), audit: None }
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("pipeline lock poisoned")
    }

    pub fn ingest(&self, event: NormalizedEvent, now_ms: u64) -> Result<Ack, IngestError> {
        let mut inner = self.lock();
        if inner.queue.len() >= self.hard_cap {
            return Err(IngestError::QueueFull { cap: self.hard_cap });
        }
        if !inner.seen.insert(event.event_id.clone()) {
            return Err(IngestError::DuplicateEventId(event.event_id));
        }
        if let Some(audit) = &self.audit {
            audit.append(Actor::Orchestrator, AuditAction::EventIngested, &event.event_id, &event);
        }
        inner.queue.push_back(Queued { event, ingested_at_ms: now_ms });
        inner.last_ingest_ms = Some(now_ms);
        Ok(Ack { depth: inner.queue.len() })
    }

    /// Normalizes and ingests. Malformed events go to quarantine and the
    /// error is returned to the caller.
    pub fn submit_raw(&self, raw: RawEvent, now_ms: u64) -> Result<Ack, IngestError> {
        match normalize(&raw) {
            Ok(event) => self.ingest(event, now_ms),
            Err(err) => {
                self.quarantine(raw, &err, now_ms);
                Err(err.into())
            }
        }
    }

    fn quarantine(&self, raw: RawEvent, err: &MalformedEvent, now_ms: u64) {
        if let Some(audit) = &self.audit {
            audit.append(Actor::Orchestrator, AuditAction::EventQuarantined, &err.field, &raw);
        }
        self.lock().quarantine.push(QuarantinedEvent {
            raw,
            field: err.field.clone(),
            reason: err.reason.clone(),
            quarantined_at_ms: now_ms,
        });
    }

    pub fn poll_batch(&self, policy: &BatchPolicy, now_ms: u64) -> Option<EventBatch> {
        let mut inner = self.lock();
        let len = inner.queue.len();
        if len == 0 {
            return None;
        }
        let reason = if len >= policy.max_count {
            TriggerReason::Count
        } else {
            let last = inner.last_ingest_ms?;
            if now_ms.saturating_sub(last) >= policy.quiescence_ms && now_ms >= last {
                TriggerReason::Quiescence
            } else {
                return None;
            }
        };
        let take = len.min(policy.max_count);
        let drained: Vec<Queued> = inner.queue.drain(..take).collect();
        inner.batches += 1;
        let last_ingested_at_ms = drained.iter().map(|q| q.ingested_at_ms).max().unwrap_or(now_ms);
        Some(EventBatch {
            batch_id: format!("batch-{:06}", inner.batches),
            events: drained.into_iter().map(|q| q.event).collect(),
            trigger_reason: reason,
            created_at_ms: now_ms,
            last_ingested_at_ms,
        })
    }

    pub fn depth(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn quarantined(&self) -> Vec<QuarantinedEvent> {
        self.lock().quarantine.clone()
    }

    pub fn batches_emitted(&self) -> u64 {
        self.lock().batches
    }
}
