//! Run manifest: every artifact a command wrote, its content hash, and the
//! fully-resolved config that produced it.
//!
//! Hashes come in two scopes. `bytes` is the SHA-256 of the file as written.
//! Artifacts that embed wall-clock timing (traces, comparisons) hash a
//! canonical rendering with the timing fields zeroed instead, so reruns of
//! the same config produce byte-identical manifests.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory.
    pub path: String,
    /// Artifact role, e.g. `checkpoint`, `trace`, `report`.
    pub kind: String,
    pub sha256: String,
    /// `bytes` or `canonical` (timing fields zeroed before hashing).
    pub hash_scope: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    /// `complete` on success, `incomplete` when the run failed after
    /// producing some artifacts.
    pub status: String,
    pub error: Option<String>,
    pub config: serde_json::Value,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    artifacts: Vec<ArtifactEntry>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            artifacts: Vec::new(),
        }
    }

    /// Register a file hashed over its exact bytes.
    pub fn add_file(&mut self, out_dir: &Path, rel_path: &str, kind: &str) -> std::io::Result<()> {
        let bytes = fs::read(out_dir.join(rel_path))?;
        self.artifacts.push(ArtifactEntry {
            path: rel_path.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(&bytes),
            hash_scope: "bytes".to_string(),
        });
        Ok(())
    }

    /// Register a timing-bearing file, hashing the supplied canonical form.
    pub fn add_canonical(&mut self, rel_path: &str, kind: &str, canonical: &[u8]) {
        self.artifacts.push(ArtifactEntry {
            path: rel_path.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(canonical),
            hash_scope: "canonical".to_string(),
        });
    }

    fn build(mut self, status: &str, error: Option<String>) -> Manifest {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Manifest {
            command: self.command,
            status: status.to_string(),
            error,
            config: self.config,
            artifacts: self.artifacts,
        }
    }

    pub fn write_complete(self, out_dir: &Path) -> std::io::Result<()> {
        let manifest = self.build("complete", None);
        write_manifest(&manifest, out_dir)
    }

    pub fn write_incomplete(self, out_dir: &Path, error: &str) -> std::io::Result<()> {
        let manifest = self.build("incomplete", Some(error.to_string()));
        write_manifest(&manifest, out_dir)
    }
}

fn write_manifest(manifest: &Manifest, out_dir: &Path) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    fs::write(out_dir.join("manifest.json"), json + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn artifacts_are_sorted_in_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut b = ManifestBuilder::new("test", serde_json::json!({}));
        b.add_canonical("z.csv", "trace", b"z");
        b.add_canonical("a.csv", "trace", b"a");
        b.write_complete(dir.path()).unwrap();
        let manifest: Manifest = serde_json::from_str(
            &fs::read_to_string(dir.path().join("manifest.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(manifest.artifacts[0].path, "a.csv");
        assert_eq!(manifest.artifacts[1].path, "z.csv");
        assert_eq!(manifest.status, "complete");
    }
}
