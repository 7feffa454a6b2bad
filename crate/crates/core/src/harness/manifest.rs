use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Flat `key=value` record of what a run consumed and produced. Keys are
/// written sorted and nothing time-dependent is recorded, so equal runs give
/// equal manifests.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    entries: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self::default();
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        self.entries.insert(key.into(), value);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// Records the file's SHA-256 under `<prefix>.<name>`.
    pub fn add_file(&mut self, prefix: &str, name: &str, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.set(format!("{prefix}.{name}"), digest);
        Ok(())
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("manifest line {} has no '='", n + 1)))?;
            entries.insert(k.to_string(), v.to_string());
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_and_parsable() {
        let mut m = Manifest::new("gen-synth");
        m.set("seed", 7);
        m.set("a.b", "x=y");
        let text = m.to_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(Manifest::parse(&text).unwrap(), m);
        assert_eq!(m.get("a.b"), Some("x=y"));
    }

    #[test]
    fn file_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
