use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stages: BTreeMap<String, StageRecord>,
    /// Every output file (relative to the output directory) with its sha256.
    pub artifacts: BTreeMap<String, String>,
}

impl Default for Manifest {
    fn default() -> Self {
        Manifest { version: MANIFEST_VERSION, stages: BTreeMap::new(), artifacts: BTreeMap::new() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

/// Inputs and parameters of one stage run, hashed into a fingerprint.
pub struct StageKey {
    pub stage: String,
    pub fingerprint: String,
    pub inputs: BTreeMap<String, String>,
}

impl StageKey {
    pub fn new<P: Serialize>(stage: &str, params: &P, inputs: &[(&str, &Path)]) -> Result<Self> {
        let mut hashed = BTreeMap::new();
        for (label, path) in inputs {
            hashed.insert(label.to_string(), hash_file(path)?);
        }
        let material = serde_json::json!({
            "stage": stage,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "params": params,
            "inputs": hashed,
        });
        Ok(StageKey { stage: stage.to_string(), fingerprint: sha256_hex(material.to_string().as_bytes()), inputs: hashed })
    }
}

/// The `--out` directory and its manifest.
pub struct Workspace {
    pub root: PathBuf,
    manifest: Manifest,
    force: bool,
}

impl Workspace {
    pub fn open(root: &Path, force: bool) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        let mpath = root.join(MANIFEST);
        let manifest = if mpath.exists() {
            let text = fs::read_to_string(&mpath)?;
            match serde_json::from_str::<Manifest>(&text) {
                Ok(m) if m.version == MANIFEST_VERSION => m,
                _ => {
                    log::warn!("ignoring unreadable manifest at {}", mpath.display());
                    Manifest::default()
                }
            }
        } else {
            Manifest::default()
        };
        Ok(Workspace { root: root.to_path_buf(), manifest, force })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Path of a prior stage's output, or an error naming where it was expected.
    pub fn require(&self, rel: &str, what: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if !p.is_file() {
            bail!("{what} not found at {}", p.display());
        }
        Ok(p)
    }

    #[cfg(test)]
    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// True when the stage already ran with this fingerprint and its outputs are intact.
    pub fn is_fresh(&self, key: &StageKey) -> bool {
        if self.force {
            return false;
        }
        let Some(rec) = self.manifest.stages.get(&key.stage) else {
            return false;
        };
        rec.fingerprint == key.fingerprint
            && rec.outputs.iter().all(|(rel, h)| hash_file(&self.path(rel)).is_ok_and(|x| &x == h))
    }

    pub fn record(&mut self, key: StageKey, outputs: &[&str]) -> Result<()> {
        let mut hashed = BTreeMap::new();
        for rel in outputs {
            hashed.insert(rel.to_string(), hash_file(&self.path(rel))?);
        }
        self.manifest
            .stages
            .insert(key.stage, StageRecord { fingerprint: key.fingerprint, inputs: key.inputs, outputs: hashed });
        self.manifest.artifacts =
            self.manifest.stages.values().flat_map(|r| r.outputs.iter().map(|(k, v)| (k.clone(), v.clone()))).collect();
        write_json(&self.path(MANIFEST), &self.manifest)
    }
}
