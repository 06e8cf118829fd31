use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::CliError;

/// Name every command gives the manifest it drops inside an output
/// directory. Hashing skips files with this name.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Record of one command run. Everything except `wall_clock_s` is a pure
/// function of the inputs and flags, so two runs can be compared by diffing
/// manifests with that field removed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective settings after defaults, config files and flags.
    pub config: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_clock_s: f64,
    /// SHA-256 of every output file, keyed by path.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_clock_s: 0.0,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.config.insert(key.to_string(), value.to_string());
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    /// Registers an output file or directory and hashes what is there now.
    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        self.outputs.push(path.display().to_string());
        for file in files_under(path)? {
            let bytes = std::fs::read(&file).map_err(CliError::io(&file))?;
            self.artifacts.insert(
                file.display().to_string(),
                hex::encode(Sha256::digest(&bytes)),
            );
        }
        Ok(())
    }

    pub fn finish(&mut self, elapsed: Duration) {
        self.wall_clock_s = elapsed.as_secs_f64();
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest always serializes");
        s.push('\n');
        s
    }
}

/// Regular files at or below `path` in a stable order, manifests excluded.
fn files_under(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(path).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        if entry.file_type().is_file() && entry.file_name() != MANIFEST_NAME {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_files_and_skips_manifests() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("sub")).unwrap();
        std::fs::write(dir.path().join("sub/a.txt"), "abc").unwrap();
        std::fs::write(dir.path().join(MANIFEST_NAME), "{}").unwrap();
        let mut m = RunManifest::new("test");
        m.output(dir.path()).unwrap();
        assert_eq!(m.artifacts.len(), 1);
        let (path, hash) = m.artifacts.iter().next().unwrap();
        assert!(path.ends_with("a.txt"));
        assert_eq!(
            hash,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let back: RunManifest = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }
}
