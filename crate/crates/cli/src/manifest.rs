//! Output directory bookkeeping: every artifact is written through
//! [`Outputs`], which records its SHA-256 for the manifest.
//!
//! The manifest is line-oriented `key=value` text. Nothing time- or
//! host-dependent goes in it, so two runs of the same config and seed at
//! one thread produce byte-identical manifests.

use std::fmt::Display;
use std::path::{Path, PathBuf};

use basisop::trainer::hex;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.txt";

pub struct Outputs {
    dir: PathBuf,
    header: Vec<(String, String)>,
    artifacts: Vec<(String, String)>,
}

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            header: Vec::new(),
            artifacts: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        let value = value.to_string();
        match self.header.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.header.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        self.record(name, bytes);
        Ok(())
    }

    /// Record a file some other routine already wrote.
    pub fn record_file(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.path(name);
        let bytes = std::fs::read(&path)
            .map_err(|e| CliError::Config(format!("cannot read back {}: {e}", path.display())))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let digest = hex(&Sha256::digest(bytes));
        match self.artifacts.iter_mut().find(|(k, _)| k == name) {
            Some(entry) => entry.1 = digest,
            None => self.artifacts.push((name.to_string(), digest)),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.header {
            out.push_str(&format!("{k}={v}\n"));
        }
        for (name, digest) in &self.artifacts {
            out.push_str(&format!("artifact.{name}.sha256={digest}\n"));
        }
        out
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.path(MANIFEST);
        std::fs::write(&path, self.render())
            .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Parse a manifest back into ordered key/value pairs.
pub fn parse_manifest(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_lists_checksums_in_write_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::create(dir.path()).unwrap();
        o.set("command", "srb");
        o.write("b.csv", b"x\n").unwrap();
        o.write("a.csv", b"").unwrap();
        o.set("command", "baseline");
        let text = o.render();
        let pairs = parse_manifest(&text);
        assert_eq!(pairs[0], ("command".into(), "baseline".into()));
        assert_eq!(pairs[1].0, "artifact.b.csv.sha256");
        // SHA-256 of the empty string
        assert_eq!(
            pairs[2].1,
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        o.finish().unwrap();
        assert!(dir.path().join(MANIFEST).exists());
    }
}
