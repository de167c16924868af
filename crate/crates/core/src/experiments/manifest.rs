//! Crash-resume bookkeeping: every finished cell's files are hashed into
//! `manifest.json`, and a rerun reuses cells whose files still match.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    /// Paths relative to the output directory.
    pub files: Vec<PathBuf>,
    /// SHA-256 over the files' bytes, concatenated in order.
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
struct ManifestFile {
    cells: BTreeMap<String, CellRecord>,
}

/// Serialized writer shared by concurrently running cells.
#[derive(Debug)]
pub struct Manifest {
    root: PathBuf,
    state: Mutex<ManifestFile>,
}

fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    hex::encode(h.finalize())
}

/// Writes through a temporary file so a crash never leaves a torn file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

impl Manifest {
    /// Opens (or starts) the manifest in `root`.
    pub fn open(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        let path = root.join(MANIFEST_FILE);
        let state = if path.is_file() {
            serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        } else {
            ManifestFile::default()
        };
        Ok(Self { root: root.to_path_buf(), state: Mutex::new(state) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// The cell's file contents if it completed and its files are intact.
    pub fn completed(&self, key: &str) -> Option<Vec<Vec<u8>>> {
        let record = self.state.lock().expect("manifest lock").cells.get(key).cloned()?;
        let contents: Vec<Vec<u8>> = record.files.iter().map(|f| fs::read(self.root.join(f))).collect::<Result<_, _>>().ok()?;
        let parts: Vec<&[u8]> = contents.iter().map(Vec::as_slice).collect();
        if digest(&parts) == record.sha256 {
            Some(contents)
        } else {
            log::warn!("cell {key} changed on disk; recomputing");
            None
        }
    }

    /// Writes a finished cell's files, then records it.
    pub fn complete(&self, key: &str, files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
        let mut state = self.state.lock().expect("manifest lock");
        for (rel, bytes) in files {
            write_atomic(&self.root.join(rel), bytes)?;
        }
        let parts: Vec<&[u8]> = files.iter().map(|(_, b)| b.as_slice()).collect();
        let record = CellRecord { files: files.iter().map(|(p, _)| p.clone()).collect(), sha256: digest(&parts) };
        state.cells.insert(key.to_string(), record);
        let text = serde_json::to_vec_pretty(&*state)?;
        write_atomic(&self.root.join(MANIFEST_FILE), &text)
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("manifest lock").cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completed_cells_survive_reopen_and_detect_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest::open(dir.path()).unwrap();
        assert!(m.completed("a").is_none());
        m.complete("a", &[(PathBuf::from("cells/a.json"), b"{}".to_vec())]).unwrap();
        let reopened = Manifest::open(dir.path()).unwrap();
        assert_eq!(reopened.completed("a").unwrap(), vec![b"{}".to_vec()]);
        fs::write(dir.path().join("cells/a.json"), b"[]").unwrap();
        assert!(reopened.completed("a").is_none());
    }
}
