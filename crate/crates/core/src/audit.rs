//! Append-only audit trail shared by the pipeline, the configuration
//! service and the reasoning loop.
//!
//! Sequence numbers are assigned under the write lock, so the log is gapless
//! by construction. Payloads are not stored; each record keeps a SHA-256
//! digest of the serialized request/response instead.

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::clock::Clock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Actor {
    Agent,
    Operator,
    Orchestrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditAction {
    EventIngested,
    EventQuarantined,
    ConfigRead,
    ProposalInvalid,
    ProposalCreated,
    ProposalApproved,
    ProposalRejected,
    DecisionRefused,
    ProposalApplied,
    ApplyFailed,
    ApplyRefused,
    ToolDispatched,
    ToolRejected,
    CycleStarted,
    AgentStep,
    AgentProtocolError,
    HumanInput,
    CycleStopped,
}

impl AuditAction {
    /// Actions emitted by the configuration service.
    pub fn is_config(self) -> bool {
        matches!(
            self,
            AuditAction::ConfigRead
                | AuditAction::ProposalInvalid
                | AuditAction::ProposalCreated
                | AuditAction::ProposalApproved
                | AuditAction::ProposalRejected
                | AuditAction::DecisionRefused
                | AuditAction::ProposalApplied
                | AuditAction::ApplyFailed
                | AuditAction::ApplyRefused
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub actor: Actor,
    pub action: AuditAction,
    pub subject: String,
    pub digest: String,
    pub timestamp_ms: u64,
    /// Short human-readable outcome, e.g. the operator identity or an error.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Hex SHA-256 of the JSON serialization of `value`.
pub fn digest<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

pub struct AuditLog {
    records: RwLock<Vec<AuditRecord>>,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for AuditLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AuditLog").field("len", &self.len()).finish()
    }
}

impl AuditLog {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Self { records: RwLock::new(Vec::new()), clock }
    }

    pub fn append<T: Serialize + ?Sized>(
        &self,
        actor: Actor,
        action: AuditAction,
        subject: impl Into<String>,
        payload: &T,
    ) -> u64 {
        self.append_noted(actor, action, subject, payload, String::new())
    }

    pub fn append_noted<T: Serialize + ?Sized>(
        &self,
        actor: Actor,
        action: AuditAction,
        subject: impl Into<String>,
        payload: &T,
        note: impl Into<String>,
    ) -> u64 {
        let digest = digest(payload);
        let timestamp_ms = self.clock.now_ms();
        let mut records = self.records.write().expect("audit lock poisoned");
        let seq = records.len() as u64;
        records.push(AuditRecord {
            seq,
            actor,
            action,
            subject: subject.into(),
            digest,
            timestamp_ms,
            note: note.into(),
        });
        seq
    }

    pub fn records(&self) -> Vec<AuditRecord> {
        self.records.read().expect("audit lock poisoned").clone()
    }

    pub fn since(&self, seq: u64) -> Vec<AuditRecord> {
        let records = self.records.read().expect("audit lock poisoned");
        records.iter().skip(seq as usize).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.read().expect("audit lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Newline-delimited JSON export, one record per line.
    pub fn export_ndjson(&self) -> String {
        let mut out = String::new();
        for r in self.records() {
            out.push_str(&serde_json::to_string(&r).expect("audit record serializes"));
            out.push('\n');
        }
        out
    }
}

/// True if `records` carry the sequence numbers 0..n in order.
pub fn is_gapless(records: &[AuditRecord]) -> bool {
    records.iter().enumerate().all(|(i, r)| r.seq == i as u64)
}
