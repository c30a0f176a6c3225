//! Versioned A3 configuration tree with approval-gated patching.
//!
//! Leaves are addressed as `gnb/<gnb>/cell/<cell>/a3/<leaf>`. The tree only
//! changes inside [`ConfigService::apply`] for an approved proposal, and
//! each successful apply bumps a single global version.

mod document;
mod service;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ran_sim::{validate_hysteresis_db, validate_offset_db, validate_ttt_ms, A3Config, CellId};

pub use document::ConfigDocument;
pub use service::{ApplyReport, AppliedEntry, ConfigReading, ConfigService, VersionEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum A3Leaf {
    OffsetDb,
    HysteresisDb,
    TttMs,
}

impl A3Leaf {
    pub const ALL: [A3Leaf; 3] = [A3Leaf::OffsetDb, A3Leaf::HysteresisDb, A3Leaf::TttMs];

    pub fn as_str(self) -> &'static str {
        match self {
            A3Leaf::OffsetDb => "offset-db",
            A3Leaf::HysteresisDb => "hysteresis-db",
            A3Leaf::TttMs => "ttt-ms",
        }
    }

    pub fn get(self, a3: &A3Config) -> ConfigValue {
        match self {
            A3Leaf::OffsetDb => ConfigValue(a3.offset_db),
            A3Leaf::HysteresisDb => ConfigValue(a3.hysteresis_db),
            A3Leaf::TttMs => ConfigValue(f64::from(a3.ttt_ms)),
        }
    }

    /// Checks `v` against this leaf's domain.
    pub fn validate(self, v: ConfigValue) -> Result<(), String> {
        match self {
            A3Leaf::OffsetDb => validate_offset_db(v.0),
            A3Leaf::HysteresisDb => validate_hysteresis_db(v.0),
            A3Leaf::TttMs => validate_ttt_ms(v.as_ttt().ok_or_else(|| format!("{v} is not a whole millisecond count"))?),
        }
    }

    /// Caller must have validated `v`.
    fn set(self, a3: &mut A3Config, v: ConfigValue) {
        match self {
            A3Leaf::OffsetDb => a3.offset_db = v.0,
            A3Leaf::HysteresisDb => a3.hysteresis_db = v.0,
            A3Leaf::TttMs => a3.ttt_ms = v.as_ttt().expect("validated ttt"),
        }
    }
}

/// Canonical path to one A3 leaf.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigPath {
    pub cell: CellId,
    pub leaf: A3Leaf,
}

impl ConfigPath {
    pub const fn new(cell: CellId, leaf: A3Leaf) -> Self {
        Self { cell, leaf }
    }

    /// The three leaves of one cell, in canonical order.
    pub fn all_for(cell: CellId) -> [ConfigPath; 3] {
        A3Leaf::ALL.map(|leaf| ConfigPath { cell, leaf })
    }
}

impl fmt::Display for ConfigPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "gnb/{}/cell/{}/a3/{}", self.cell.gnb_id, self.cell.cell_id, self.leaf.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid config path `{0}`")]
pub struct PathSyntaxError(pub String);

fn canonical_index(s: &str) -> Option<u32> {
    // reject "+1", "01" and friends so the text form round-trips
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok()
}

impl FromStr for ConfigPath {
    type Err = PathSyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || PathSyntaxError(s.to_string());
        let parts: Vec<&str> = s.split('/').collect();
        let [g, gnb, c, cell, a3, leaf] = parts.as_slice() else {
            return Err(err());
        };
        if *g != "gnb" || *c != "cell" || *a3 != "a3" {
            return Err(err());
        }
        let leaf = A3Leaf::ALL.into_iter().find(|l| l.as_str() == *leaf).ok_or_else(err)?;
        let gnb = canonical_index(gnb).ok_or_else(err)?;
        let cell = canonical_index(cell).ok_or_else(err)?;
        Ok(ConfigPath { cell: CellId::new(gnb, cell), leaf })
    }
}

impl Serialize for ConfigPath {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConfigPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A leaf value. Serialized as an integer when it has no fractional part.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ConfigValue(pub f64);

impl ConfigValue {
    pub fn as_ttt(self) -> Option<u32> {
        (self.0.fract() == 0.0 && (0.0..=f64::from(u32::MAX)).contains(&self.0)).then_some(self.0 as u32)
    }
}

impl fmt::Display for ConfigValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<f64> for ConfigValue {
    fn from(v: f64) -> Self {
        ConfigValue(v)
    }
}

impl From<u32> for ConfigValue {
    fn from(v: u32) -> Self {
        ConfigValue(f64::from(v))
    }
}

impl Serialize for ConfigValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.fract() == 0.0 && self.0.abs() < 9.0e15 {
            s.serialize_i64(self.0 as i64)
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ConfigValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        if !v.is_finite() {
            return Err(serde::de::Error::custom("value must be finite"));
        }
        Ok(ConfigValue(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchEntry {
    pub path: ConfigPath,
    pub expected_old: ConfigValue,
    pub new: ConfigValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub entries: Vec<PatchEntry>,
}

impl ConfigPatch {
    pub fn new(entries: Vec<PatchEntry>) -> Self {
        Self { entries }
    }

    /// Patch moving each listed cell from `from` to `to`, one entry per
    /// leaf that actually changes.
    pub fn between(cells: &[CellId], from: &A3Config, to: &A3Config) -> Self {
        let entries = cells
            .iter()
            .flat_map(|&cell| ConfigPath::all_for(cell))
            .filter_map(|path| {
                let (old, new) = (path.leaf.get(from), path.leaf.get(to));
                (old != new).then_some(PatchEntry { path, expected_old: old, new })
            })
            .collect();
        Self { entries }
    }

    pub fn paths(&self) -> impl Iterator<Item = &ConfigPath> {
        self.entries.iter().map(|e| &e.path)
    }

    pub fn cells(&self) -> Vec<CellId> {
        let mut cells: Vec<CellId> = self.paths().map(|p| p.cell).collect();
        cells.sort_unstable();
        cells.dedup();
        cells
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProposalStatus {
    Pending,
    Approved,
    Rejected,
    Applied,
    Failed,
}

impl ProposalStatus {
    pub fn can_become(self, next: ProposalStatus) -> bool {
        use ProposalStatus::*;
        matches!((self, next), (Pending, Approved) | (Pending, Rejected) | (Approved, Applied) | (Approved, Failed))
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ProposalStatus::Rejected | ProposalStatus::Applied | ProposalStatus::Failed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusChange {
    pub status: ProposalStatus,
    pub at_ms: u64,
    pub by: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub proposal_id: String,
    pub patch: ConfigPatch,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_by_cycle: Option<String>,
    pub status: ProposalStatus,
    /// Every status the proposal has held, starting with PENDING.
    pub transitions: Vec<StatusChange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl Proposal {
    pub fn created_at_ms(&self) -> u64 {
        self.transitions.first().map(|t| t.at_ms).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("path not found: {0}")]
    PathNotFound(String),
    #[error("invalid patch at `{path}`: {reason}")]
    InvalidPatch { path: String, reason: String },
    #[error("unknown proposal {0}")]
    UnknownProposal(String),
    #[error("proposal {id} is {status:?}, not PENDING")]
    NotPending { id: String, status: ProposalStatus },
    #[error("proposal {id} is {status:?}, not APPROVED")]
    NotApproved { id: String, status: ProposalStatus },
    #[error("stale value at `{path}`: expected {expected}, found {actual}")]
    StaleValue { path: ConfigPath, expected: ConfigValue, actual: ConfigValue },
    #[error("read-back mismatch at `{0}`")]
    ReadBackMismatch(ConfigPath),
    #[error("invalid config document: {0}")]
    Document(String),
}
