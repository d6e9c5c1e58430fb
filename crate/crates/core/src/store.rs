// SPDX-License-Identifier: Apache-2.0

//! Run directories and their artifact index.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const RUN_RECORD_FILE: &str = "run.json";
pub const STATE_FILE: &str = "state.json";
pub const ORIGINAL_FILE: &str = "original.v";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
    #[error("run record already written for {0}")]
    RecordExists(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.display().to_string(), source }
}

/// Writes `bytes` to a temporary file beside `path` and renames it into
/// place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let parent = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(io_err(parent))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| StoreError::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Original,
    Spec,
    Recon,
    FecLog,
    Report,
    State,
    Config,
}

impl ArtifactKind {
    /// Kinds whose bytes must be reproduced exactly on replay.
    pub fn is_replayed(self) -> bool {
        matches!(self, ArtifactKind::Spec | ArtifactKind::Recon | ArtifactKind::Report | ArtifactKind::State)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub kind: ArtifactKind,
    pub round: Option<u32>,
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Summary written once when a run finishes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub case_id: String,
    pub mode: String,
    pub config: serde_json::Value,
    pub status: String,
    pub final_round: u32,
    pub artifacts: Vec<ArtifactEntry>,
    pub wall_time_ms: u64,
    pub tool_versions: BTreeMap<String, String>,
    pub started_at: String,
    /// Request-tag prefix used for this run's model calls.
    #[serde(default)]
    pub lane: String,
}

#[derive(Debug)]
pub struct RunStore {
    dir: PathBuf,
    index: Mutex<BTreeMap<String, ArtifactEntry>>,
}

/// Timestamp used for run directory names.
pub fn run_timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string()
}

impl RunStore {
    /// Creates `<root>/<case_id>/<timestamp>/`, adding a numeric suffix if
    /// the directory already exists.
    pub fn create(root: &Path, case_id: &str, timestamp: &str) -> Result<Self, StoreError> {
        let base = root.join(case_id);
        let mut dir = base.join(timestamp);
        let mut n = 1;
        while dir.exists() {
            dir = base.join(format!("{timestamp}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(Self { dir, index: Mutex::new(BTreeMap::new()) })
    }

    /// Uses an existing directory as-is.
    pub fn at(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { dir: dir.to_path_buf(), index: Mutex::new(BTreeMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Scratch directory for tool runs, created on demand.
    pub fn work_dir(&self, name: &str) -> Result<PathBuf, StoreError> {
        let p = self.dir.join("work").join(name);
        std::fs::create_dir_all(&p).map_err(io_err(&p))?;
        Ok(p)
    }

    /// Atomically writes an artifact and records it in the index.
    pub fn write_artifact(
        &self,
        kind: ArtifactKind,
        round: Option<u32>,
        name: &str,
        content: &str,
    ) -> Result<PathBuf, StoreError> {
        let path = self.dir.join(name);
        atomic_write(&path, content.as_bytes())?;
        let entry = ArtifactEntry { kind, round, path: name.to_string(), sha256: sha256_hex(content.as_bytes()) };
        self.index.lock().expect("index poisoned").insert(name.to_string(), entry);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(
        &self,
        kind: ArtifactKind,
        round: Option<u32>,
        name: &str,
        value: &T,
    ) -> Result<PathBuf, StoreError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_artifact(kind, round, name, &text)
    }

    pub fn artifacts(&self) -> Vec<ArtifactEntry> {
        let mut v: Vec<ArtifactEntry> = self.index.lock().expect("index poisoned").values().cloned().collect();
        v.sort_by(|a, b| (a.round, a.kind, &a.path).cmp(&(b.round, b.kind, &b.path)));
        v
    }

    /// Writes `run.json`. A run record is written once.
    pub fn write_record(&self, record: &RunRecord) -> Result<PathBuf, StoreError> {
        let path = self.dir.join(RUN_RECORD_FILE);
        if path.exists() {
            return Err(StoreError::RecordExists(self.dir.display().to_string()));
        }
        for a in &record.artifacts {
            let p = self.dir.join(&a.path);
            if !p.is_file() {
                return Err(StoreError::Io {
                    path: p.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, "indexed artifact missing"),
                });
            }
        }
        let mut text = serde_json::to_string_pretty(record)?;
        text.push('\n');
        atomic_write(&path, text.as_bytes())?;
        Ok(path)
    }

    pub fn read_record(dir: &Path) -> Result<RunRecord, StoreError> {
        let path = dir.join(RUN_RECORD_FILE);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifacts_are_indexed_with_hashes() {
        let root = tempfile::tempdir().unwrap();
        let store = RunStore::create(root.path(), "case", "t0").unwrap();
        store.write_artifact(ArtifactKind::Spec, Some(1), "spec_round_1.txt", "abc").unwrap();
        store.write_artifact(ArtifactKind::Original, None, ORIGINAL_FILE, "module m; endmodule").unwrap();
        let a = store.artifacts();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].kind, ArtifactKind::Original);
        assert_eq!(a[1].sha256, "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
        assert_eq!(std::fs::read_to_string(store.dir().join("spec_round_1.txt")).unwrap(), "abc");
    }

    #[test]
    fn duplicate_timestamps_get_suffixes() {
        let root = tempfile::tempdir().unwrap();
        let a = RunStore::create(root.path(), "c", "t").unwrap();
        let b = RunStore::create(root.path(), "c", "t").unwrap();
        assert_ne!(a.dir(), b.dir());
        assert!(b.dir().ends_with("t-1"));
    }

    #[test]
    fn record_written_once_and_checks_artifacts() {
        let root = tempfile::tempdir().unwrap();
        let store = RunStore::create(root.path(), "c", "t").unwrap();
        store.write_artifact(ArtifactKind::State, None, STATE_FILE, "{}").unwrap();
        let record = RunRecord {
            case_id: "c".into(),
            mode: "full".into(),
            config: serde_json::json!({}),
            status: "Passed".into(),
            final_round: 1,
            artifacts: store.artifacts(),
            wall_time_ms: 1,
            tool_versions: BTreeMap::new(),
            started_at: "now".into(),
            lane: String::new(),
        };
        store.write_record(&record).unwrap();
        assert!(matches!(store.write_record(&record), Err(StoreError::RecordExists(_))));
        assert_eq!(RunStore::read_record(store.dir()).unwrap(), record);

        let other = RunStore::create(root.path(), "c", "u").unwrap();
        let mut bad = record.clone();
        bad.artifacts[0].path = "missing.txt".into();
        assert!(other.write_record(&bad).is_err());
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.json");
        atomic_write(&p, b"one").unwrap();
        atomic_write(&p, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
