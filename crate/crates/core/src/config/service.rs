use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{
    ConfigError, ConfigPatch, ConfigPath, ConfigValue, Decision, Proposal, ProposalStatus, StatusChange,
};
use crate::audit::{Actor, AuditAction, AuditLog, AuditRecord};
use crate::ran_sim::{A3Config, CellId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReading {
    pub path: ConfigPath,
    pub value: ConfigValue,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppliedEntry {
    pub path: ConfigPath,
    pub old: ConfigValue,
    pub new: ConfigValue,
    pub read_back: ConfigValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub proposal_id: String,
    pub entries: Vec<AppliedEntry>,
    pub version: u64,
}

impl ApplyReport {
    pub fn read_back_matches(&self) -> bool {
        self.entries.iter().all(|e| e.read_back == e.new)
    }
}

/// One committed version of the tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VersionEntry {
    pub version: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_id: Option<String>,
    pub at_ms: u64,
    pub cells: BTreeMap<CellId, A3Config>,
}

#[derive(Debug)]
struct State {
    tree: BTreeMap<CellId, A3Config>,
    version: u64,
    proposals: BTreeMap<String, Proposal>,
    next_proposal: u64,
    versions: Vec<VersionEntry>,
}

/// The configuration store. Every operation holds the single writer lock
/// while it also appends its audit record, so audit order equals commit
/// order.
#[derive(Debug)]
pub struct ConfigService {
    state: RwLock<State>,
    audit: Arc<AuditLog>,
}

impl ConfigService {
    pub fn new(cells: BTreeMap<CellId, A3Config>, audit: Arc<AuditLog>) -> Self {
        Self::with_version(cells, 0, audit)
    }

    pub(super) fn with_version(cells: BTreeMap<CellId, A3Config>, version: u64, audit: Arc<AuditLog>) -> Self {
        let at_ms = audit.now_ms();
        let versions = vec![VersionEntry { version, proposal_id: None, at_ms, cells: cells.clone() }];
        Self {
            state: RwLock::new(State { tree: cells, version, proposals: BTreeMap::new(), next_proposal: 1, versions }),
            audit,
        }
    }

    pub fn audit(&self) -> &Arc<AuditLog> {
        &self.audit
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().expect("config lock poisoned")
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().expect("config lock poisoned")
    }

    fn lookup(tree: &BTreeMap<CellId, A3Config>, path: &ConfigPath) -> Result<ConfigValue, ConfigError> {
        tree.get(&path.cell).map(|a3| path.leaf.get(a3)).ok_or_else(|| ConfigError::PathNotFound(path.to_string()))
    }

    pub fn version(&self) -> u64 {
        self.read().version
    }

    /// Current A3 parameters per cell, as the simulator should use them.
    pub fn a3_snapshot(&self) -> BTreeMap<CellId, A3Config> {
        self.read().tree.clone()
    }

    /// Version and tree read under one lock.
    pub fn versioned_snapshot(&self) -> (u64, BTreeMap<CellId, A3Config>) {
        let s = self.read();
        (s.version, s.tree.clone())
    }

    pub fn cells(&self) -> Vec<CellId> {
        self.read().tree.keys().copied().collect()
    }

    pub fn get_config(&self, path: &ConfigPath, actor: Actor) -> Result<ConfigReading, ConfigError> {
        self.get_configs(std::slice::from_ref(path), actor).map(|mut v| v.remove(0))
    }

    /// Reads several leaves against one committed version. Recorded as one
    /// audit entry.
    pub fn get_configs(&self, paths: &[ConfigPath], actor: Actor) -> Result<Vec<ConfigReading>, ConfigError> {
        let s = self.write();
        let result: Result<Vec<ConfigReading>, ConfigError> = paths
            .iter()
            .map(|p| Self::lookup(&s.tree, p).map(|value| ConfigReading { path: *p, value, version: s.version }))
            .collect();
        let subject = paths.iter().map(ToString::to_string).collect::<Vec<_>>().join(",");
        let note = match &result {
            Ok(_) => format!("version {}", s.version),
            Err(e) => e.to_string(),
        };
        self.audit.append_noted(actor, AuditAction::ConfigRead, subject, &paths, note);
        result
    }

    fn check_patch(tree: &BTreeMap<CellId, A3Config>, patch: &ConfigPatch) -> Result<(), ConfigError> {
        let invalid = |path: String, reason: &str| ConfigError::InvalidPatch { path, reason: reason.to_string() };
        if patch.entries.is_empty() {
            return Err(invalid(String::new(), "empty"));
        }
        let mut seen = std::collections::BTreeSet::new();
        let mut after = tree.clone();
        for e in &patch.entries {
            if !seen.insert(e.path) {
                return Err(invalid(e.path.to_string(), "duplicate path"));
            }
            let Some(a3) = after.get_mut(&e.path.cell) else {
                return Err(invalid(e.path.to_string(), "path does not resolve"));
            };
            e.path.leaf.validate(e.new).map_err(|r| invalid(e.path.to_string(), &r))?;
            e.path.leaf.set(a3, e.new);
        }
        for (cell, a3) in &after {
            a3.validate().map_err(|r| invalid(cell.to_string(), &r))?;
        }
        Ok(())
    }

    /// Checks a patch without recording anything.
    pub fn validate_patch(&self, patch: &ConfigPatch) -> Result<(), ConfigError> {
        Self::check_patch(&self.read().tree, patch)
    }

    pub fn propose(
        &self,
        patch: ConfigPatch,
        rationale: impl Into<String>,
        cycle_id: Option<String>,
    ) -> Result<Proposal, ConfigError> {
        let mut s = self.write();
        if let Err(e) = Self::check_patch(&s.tree, &patch) {
            self.audit.append_noted(Actor::Orchestrator, AuditAction::ProposalInvalid, "", &patch, e.to_string());
            return Err(e);
        }
        let id = format!("prop-{:04}", s.next_proposal);
        s.next_proposal += 1;
        let at_ms = self.audit.now_ms();
        let proposal = Proposal {
            proposal_id: id.clone(),
            patch,
            rationale: rationale.into(),
            created_by_cycle: cycle_id,
            status: ProposalStatus::Pending,
            transitions: vec![StatusChange { status: ProposalStatus::Pending, at_ms, by: "orchestrator".into() }],
            failure: None,
        };
        self.audit.append_noted(
            Actor::Orchestrator,
            AuditAction::ProposalCreated,
            &id,
            &proposal.patch,
            proposal.created_by_cycle.clone().unwrap_or_default(),
        );
        s.proposals.insert(id, proposal.clone());
        Ok(proposal)
    }

    pub fn decide(&self, proposal_id: &str, decision: Decision, operator: &str) -> Result<Proposal, ConfigError> {
        let mut s = self.write();
        let refuse = |e: ConfigError| {
            self.audit.append_noted(
                Actor::Operator,
                AuditAction::DecisionRefused,
                proposal_id,
                &decision,
                format!("{operator}: {e}"),
            );
            e
        };
        let Some(p) = s.proposals.get_mut(proposal_id) else {
            return Err(refuse(ConfigError::UnknownProposal(proposal_id.to_string())));
        };
        if p.status != ProposalStatus::Pending {
            let status = p.status;
            return Err(refuse(ConfigError::NotPending { id: proposal_id.to_string(), status }));
        }
        let (status, action) = match decision {
            Decision::Approve => (ProposalStatus::Approved, AuditAction::ProposalApproved),
            Decision::Reject => (ProposalStatus::Rejected, AuditAction::ProposalRejected),
        };
        p.status = status;
        p.transitions.push(StatusChange { status, at_ms: self.audit.now_ms(), by: operator.to_string() });
        self.audit.append_noted(Actor::Operator, action, proposal_id, &decision, operator);
        Ok(p.clone())
    }

    /// Applies an approved proposal as one compare-and-swap transaction.
    pub fn apply(&self, proposal_id: &str) -> Result<ApplyReport, ConfigError> {
        let mut guard = self.write();
        let s = &mut *guard;
        let refuse = |e: ConfigError| {
            self.audit.append_noted(Actor::Orchestrator, AuditAction::ApplyRefused, proposal_id, &(), e.to_string());
            e
        };
        let Some(p) = s.proposals.get_mut(proposal_id) else {
            return Err(refuse(ConfigError::UnknownProposal(proposal_id.to_string())));
        };
        if p.status != ProposalStatus::Approved {
            return Err(refuse(ConfigError::NotApproved { id: proposal_id.to_string(), status: p.status }));
        }

        let mut next = s.tree.clone();
        let mut entries = Vec::with_capacity(p.patch.entries.len());
        let mut failure = None;
        for e in &p.patch.entries {
            let Some(a3) = next.get_mut(&e.path.cell) else {
                failure = Some(ConfigError::PathNotFound(e.path.to_string()));
                break;
            };
            let actual = e.path.leaf.get(a3);
            if actual != e.expected_old {
                failure = Some(ConfigError::StaleValue { path: e.path, expected: e.expected_old, actual });
                break;
            }
            e.path.leaf.set(a3, e.new);
            entries.push(AppliedEntry { path: e.path, old: actual, new: e.new, read_back: e.new });
        }

        let at_ms = self.audit.now_ms();
        if let Some(err) = failure {
            p.status = ProposalStatus::Failed;
            p.failure = Some(err.to_string());
            p.transitions.push(StatusChange { status: ProposalStatus::Failed, at_ms, by: "orchestrator".into() });
            self.audit.append_noted(
                Actor::Orchestrator,
                AuditAction::ApplyFailed,
                proposal_id,
                &p.patch,
                err.to_string(),
            );
            return Err(err);
        }

        s.tree = next;
        s.version += 1;
        for entry in &mut entries {
            entry.read_back = Self::lookup(&s.tree, &entry.path)?;
            if entry.read_back != entry.new {
                return Err(ConfigError::ReadBackMismatch(entry.path));
            }
        }
        p.status = ProposalStatus::Applied;
        p.transitions.push(StatusChange { status: ProposalStatus::Applied, at_ms, by: "orchestrator".into() });
        let report = ApplyReport { proposal_id: proposal_id.to_string(), entries, version: s.version };
        s.versions.push(VersionEntry {
            version: s.version,
            proposal_id: Some(proposal_id.to_string()),
            at_ms,
            cells: s.tree.clone(),
        });
        self.audit.append_noted(
            Actor::Orchestrator,
            AuditAction::ProposalApplied,
            proposal_id,
            &report,
            format!("version {}", s.version),
        );
        Ok(report)
    }

    pub fn proposal(&self, proposal_id: &str) -> Option<Proposal> {
        self.read().proposals.get(proposal_id).cloned()
    }

    pub fn proposals(&self) -> Vec<Proposal> {
        self.read().proposals.values().cloned().collect()
    }

    pub fn version_history(&self) -> Vec<VersionEntry> {
        self.read().versions.clone()
    }

    /// Audit records written by configuration operations, in order.
    pub fn history(&self) -> Vec<AuditRecord> {
        self.audit.records().into_iter().filter(|r| r.action.is_config()).collect()
    }
}
