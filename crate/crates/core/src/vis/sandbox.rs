//! Directory snapshots used to detect writes outside a candidate's working
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

const MAX_ENTRIES: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Eq)]
struct Stamp {
    len: u64,
    modified: Option<SystemTime>,
    is_dir: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DirSnapshot {
    entries: BTreeMap<PathBuf, Stamp>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DirDiff {
    pub created: Vec<PathBuf>,
    pub modified: Vec<PathBuf>,
    pub removed: Vec<PathBuf>,
}

impl DirDiff {
    pub fn is_empty(&self) -> bool {
        self.created.is_empty() && self.modified.is_empty() && self.removed.is_empty()
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.created.iter().chain(&self.modified).chain(&self.removed)
    }
}

impl DirSnapshot {
    /// Walks `roots` recursively, skipping anything under `exclude`.
    pub fn capture(roots: &[PathBuf], exclude: &[PathBuf]) -> Self {
        let mut snap = Self::default();
        for root in roots {
            snap.walk(root, exclude);
        }
        snap
    }

    fn walk(&mut self, dir: &Path, exclude: &[PathBuf]) {
        let Ok(read) = std::fs::read_dir(dir) else { return };
        for entry in read.flatten() {
            if self.entries.len() >= MAX_ENTRIES {
                return;
            }
            let path = entry.path();
            if exclude.iter().any(|e| path.starts_with(e)) {
                continue;
            }
            let Ok(meta) = entry.metadata() else { continue };
            let is_dir = meta.is_dir();
            self.entries.insert(
                path.clone(),
                Stamp { len: if is_dir { 0 } else { meta.len() }, modified: meta.modified().ok(), is_dir },
            );
            if is_dir && !meta.file_type().is_symlink() {
                self.walk(&path, exclude);
            }
        }
    }

    pub fn diff(&self, after: &DirSnapshot) -> DirDiff {
        let mut d = DirDiff::default();
        for (path, stamp) in &after.entries {
            match self.entries.get(path) {
                None => d.created.push(path.clone()),
                Some(before) if !before.is_dir && before != stamp => d.modified.push(path.clone()),
                Some(_) => {}
            }
        }
        for path in self.entries.keys() {
            if !after.entries.contains_key(path) {
                d.removed.push(path.clone());
            }
        }
        d
    }
}
