//! Export/import document mirroring the tree: `gnb.<id>.cell.<id>.a3.<leaf>`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ConfigError, ConfigService};
use crate::audit::AuditLog;
use crate::ran_sim::{A3Config, CellId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct A3Document {
    pub offset_db: f64,
    pub hysteresis_db: f64,
    pub ttt_ms: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellDocument {
    pub a3: A3Document,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnbDocument {
    pub cell: BTreeMap<u32, CellDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub version: u64,
    pub gnb: BTreeMap<u32, GnbDocument>,
}

impl ConfigDocument {
    pub fn from_cells(version: u64, cells: &BTreeMap<CellId, A3Config>) -> Self {
        let mut gnb: BTreeMap<u32, GnbDocument> = BTreeMap::new();
        for (id, a3) in cells {
            gnb.entry(id.gnb_id).or_insert_with(|| GnbDocument { cell: BTreeMap::new() }).cell.insert(
                id.cell_id,
                CellDocument {
                    a3: A3Document { offset_db: a3.offset_db, hysteresis_db: a3.hysteresis_db, ttt_ms: a3.ttt_ms },
                },
            );
        }
        Self { version, gnb }
    }

    pub fn cells(&self) -> Result<BTreeMap<CellId, A3Config>, ConfigError> {
        let mut out = BTreeMap::new();
        for (g, gd) in &self.gnb {
            for (c, cd) in &gd.cell {
                let a3 = A3Config::new(cd.a3.offset_db, cd.a3.hysteresis_db, cd.a3.ttt_ms);
                a3.validate().map_err(|r| ConfigError::Document(format!("gnb/{g}/cell/{c}: {r}")))?;
                out.insert(CellId::new(*g, *c), a3);
            }
        }
        if out.is_empty() {
            return Err(ConfigError::Document("no cells".into()));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Document(e.to_string()))
    }
}

impl ConfigService {
    pub fn export_document(&self) -> ConfigDocument {
        let (version, cells) = self.versioned_snapshot();
        ConfigDocument::from_cells(version, &cells)
    }

    /// Builds a service whose tree and version come from `doc`. Proposal
    /// history is not part of the document.
    pub fn import_document(doc: &ConfigDocument, audit: Arc<AuditLog>) -> Result<Self, ConfigError> {
        Ok(Self::with_version(doc.cells()?, doc.version, audit))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;

    #[test]
    fn export_import_round_trip() {
        let mut cells = BTreeMap::new();
        cells.insert(CellId::new(30, 1), A3Config::new(2.0, 2.0, 100));
        cells.insert(CellId::new(31, 1), A3Config::new(4.5, 0.0, 320));
        let audit = Arc::new(AuditLog::new(Arc::new(ManualClock::new(0))));
        let svc = ConfigService::new(cells.clone(), audit.clone());
        let text = svc.export_document().to_json();
        assert!(text.contains("\"offset-db\""));
        let back = ConfigService::import_document(&ConfigDocument::from_json(&text).unwrap(), audit).unwrap();
        assert_eq!(back.a3_snapshot(), cells);
        assert_eq!(back.version(), 0);
    }

    #[test]
    fn invalid_documents_rejected() {
        let bad = r#"{"version":0,"gnb":{"30":{"cell":{"1":{"a3":{"offset-db":2,"hysteresis-db":2,"ttt-ms":300}}}}}}"#;
        let doc = ConfigDocument::from_json(bad).unwrap();
        assert!(doc.cells().is_err());
        assert!(ConfigDocument::from_json(r#"{"version":0,"gnb":{},"x":1}"#).is_err());
    }
}
