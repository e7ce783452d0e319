use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Everything needed to rerun a command: its full resolved settings and the
/// checksums of what it read and wrote.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: BTreeMap<String, String>,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn config_hash(command: &str, entries: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(b"\n");
    let sorted: BTreeMap<_, _> = entries.iter().cloned().collect();
    for (k, v) in sorted {
        h.update(format!("{k}={v}\n").as_bytes());
    }
    hex::encode(h.finalize())
}

impl Manifest {
    pub fn new(command: &str, seed: u64, entries: &[(String, String)]) -> Self {
        Self {
            command: command.to_string(),
            seed,
            config_hash: config_hash(command, entries),
            config: entries.iter().cloned().collect(),
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, path: &Path) -> anyhow::Result<()> {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.artifacts.insert(name, sha256_file(path)?);
        Ok(())
    }

    /// Writes `<command>.manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> anyhow::Result<PathBuf> {
        let path = dir.join(format!("{}.manifest.json", self.command));
        let json = serde_json::to_string_pretty(self)?;
        fs::write(&path, json + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_entry_order_but_not_values() {
        let a = vec![
            ("seed".to_string(), "1".to_string()),
            ("k".into(), "5".into()),
        ];
        let b = vec![
            ("k".to_string(), "5".to_string()),
            ("seed".into(), "1".into()),
        ];
        assert_eq!(config_hash("match", &a), config_hash("match", &b));
        assert_ne!(config_hash("match", &a), config_hash("train", &a));
        let c = vec![
            ("seed".to_string(), "2".to_string()),
            ("k".into(), "5".into()),
        ];
        assert_ne!(config_hash("match", &a), config_hash("match", &c));
    }

    #[test]
    fn file_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
