//! Scenario lookup by name or path.

use std::path::{Path, PathBuf};

use thiserror::Error;

use rapp_core::ran_sim::{ScenarioSpec, SimError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario `{name}` not found (looked for {})", tried.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    NotFound { name: String, tried: Vec<PathBuf> },
    #[error("{path}: {source}")]
    Invalid { path: PathBuf, source: SimError },
}

/// `ref` and `reference` name the built-in scenario. Anything else is tried
/// as a file path, then as `<dir>/<name>.toml`.
pub fn resolve(name: &str, dir: &Path) -> Result<ScenarioSpec, ScenarioError> {
    if name == "ref" || name == "reference" {
        return Ok(ScenarioSpec::reference());
    }
    let candidates = [PathBuf::from(name), dir.join(name), dir.join(format!("{name}.toml"))];
    match candidates.iter().find(|p| p.is_file()) {
        Some(path) => ScenarioSpec::load(path).map_err(|source| ScenarioError::Invalid { path: path.clone(), source }),
        None => Err(ScenarioError::NotFound { name: name.into(), tried: candidates.to_vec() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_order() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(resolve("ref", dir.path()).unwrap(), ScenarioSpec::reference());

        let mut spec = ScenarioSpec::reference();
        spec.seed = 7;
        std::fs::write(dir.path().join("seven.toml"), spec.to_toml_string()).unwrap();
        assert_eq!(resolve("seven", dir.path()).unwrap().seed, 7);
        let full = dir.path().join("seven.toml");
        assert_eq!(resolve(full.to_str().unwrap(), Path::new("/nonexistent")).unwrap().seed, 7);

        assert!(matches!(resolve("missing", dir.path()), Err(ScenarioError::NotFound { .. })));
        std::fs::write(dir.path().join("broken.toml"), "seed = \"x\"").unwrap();
        assert!(matches!(resolve("broken", dir.path()), Err(ScenarioError::Invalid { .. })));
    }
}
