use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vqat_core::container::write_atomic;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// What one stage consumed and produced, keyed by path.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_digest: String,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut r = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_json<T: Serialize>(v: &T) -> String {
    hex::encode(Sha256::digest(serde_json::to_vec(v).expect("serializable")))
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&p)?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("corrupt manifest {}: {e}", p.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        write_atomic(&dir.join(MANIFEST), &bytes)?;
        Ok(())
    }

    fn producer(&self, artifact: &str) -> Option<(&str, &StageRecord)> {
        self.stages.iter().find(|(_, r)| r.outputs.contains_key(artifact)).map(|(s, r)| (s.as_str(), r))
    }

    /// Checks that `artifact` (relative to `dir`) exists and is the file
    /// its producing stage recorded, and that the producer's own inputs
    /// have not changed since. Returns its digest.
    pub fn require(&self, dir: &Path, artifact: &str, stage: &str) -> Result<String, CliError> {
        let path = dir.join(artifact);
        if !path.exists() {
            return Err(CliError::Dependency { artifact: artifact.to_string(), stage: stage.to_string() });
        }
        let digest = sha256_file(&path)?;
        if let Some((producer, rec)) = self.producer(artifact) {
            if rec.outputs[artifact] != digest {
                return Err(CliError::Stale {
                    artifact: artifact.to_string(),
                    reason: format!("it changed after `{producer}` wrote it; rerun `vqat {producer}`"),
                });
            }
            for (input, want) in &rec.inputs {
                let p = dir.join(input);
                if p.exists() && &sha256_file(&p)? != want {
                    return Err(CliError::Stale {
                        artifact: artifact.to_string(),
                        reason: format!("it was built from an older `{input}`; rerun `vqat {producer}`"),
                    });
                }
            }
        }
        Ok(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_changed_and_outdated_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path();
        let mut m = RunManifest::default();
        assert!(matches!(m.require(d, "a.bin", "make-a"), Err(CliError::Dependency { .. })));
        std::fs::write(d.join("a.bin"), b"one").unwrap();
        std::fs::write(d.join("b.bin"), b"two").unwrap();
        let mut ra = StageRecord::default();
        ra.outputs.insert("a.bin".into(), sha256_file(&d.join("a.bin")).unwrap());
        m.stages.insert("make-a".into(), ra);
        let mut rb = StageRecord::default();
        rb.inputs.insert("a.bin".into(), sha256_file(&d.join("a.bin")).unwrap());
        rb.outputs.insert("b.bin".into(), sha256_file(&d.join("b.bin")).unwrap());
        m.stages.insert("make-b".into(), rb);
        m.require(d, "b.bin", "make-b").unwrap();
        std::fs::write(d.join("a.bin"), b"changed").unwrap();
        assert!(matches!(m.require(d, "a.bin", "make-a"), Err(CliError::Stale { .. })));
        assert!(matches!(m.require(d, "b.bin", "make-b"), Err(CliError::Stale { .. })));
    }
}
