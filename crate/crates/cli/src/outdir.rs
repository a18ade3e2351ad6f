//! Run output directory with provenance tracking. Every file goes through
//! [`OutDir`], which records its SHA-256; `finish` writes manifest.json
//! tying outputs to the command, seed, and parameter hash. No timestamps:
//! reruns with the same inputs must be byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use guide_core::Params;

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub version: String,
    /// SHA-256 of the resolved parameter tree serialized as TOML.
    pub params_sha256: String,
    /// Input files by name, hashed.
    pub inputs: BTreeMap<String, String>,
    /// Free-form provenance notes (sampling ranges, subject draws).
    pub notes: BTreeMap<String, String>,
    /// Relative output path to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    notes: BTreeMap<String, String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| {
            CliError::Runtime(format!("cannot create output directory {}: {e}", root.display()))
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
            notes: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes one output file under the root and records its hash.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.insert(rel.to_string(), sha256_hex(bytes));
        Ok(path)
    }

    /// Records a file some other writer already placed under the root.
    pub fn add_file(&mut self, rel: &str) -> Result<(), CliError> {
        let bytes = std::fs::read(self.root.join(rel))?;
        self.outputs.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    /// Hashes an input file into the provenance record.
    pub fn note_input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
        self.inputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: String) {
        self.notes.insert(key.to_string(), value);
    }

    /// Writes manifest.json and consumes the directory handle.
    pub fn finish(self, command: &str, seed: u64, params: &Params) -> Result<(), CliError> {
        let params_toml = params
            .to_toml_string()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let manifest = Manifest {
            command: command.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            params_sha256: sha256_hex(params_toml.as_bytes()),
            inputs: self.inputs,
            notes: self.notes,
            outputs: self.outputs,
        };
        let json = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let path = self.root.join("manifest.json");
        std::fs::write(&path, json)
            .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_are_stable_and_hex() {
        let h = sha256_hex(b"abc");
        assert_eq!(h, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_records_every_written_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutDir::create(dir.path()).unwrap();
        out.write("a/one.txt", b"1").unwrap();
        out.write("two.txt", b"22").unwrap();
        out.note("kind", "test".into());
        out.finish("test", 7, &Params::nominal()).unwrap();

        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        let m: Manifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m.command, "test");
        assert_eq!(m.seed, 7);
        assert_eq!(m.outputs.len(), 2);
        assert_eq!(m.outputs["a/one.txt"], sha256_hex(b"1"));
        assert_eq!(m.notes["kind"], "test");
        assert_eq!(m.params_sha256.len(), 64);
    }
}
