//! Output directory bookkeeping: atomic writes, checksums, the run
//! manifest, and removal of everything written if a run fails.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use wickpt::table::Table;

use crate::error::AppError;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Value,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub headline: Map<String, Value>,
}

#[derive(Debug)]
pub struct Output {
    root: PathBuf,
    files: Mutex<Vec<FileEntry>>,
    dirs: Mutex<Vec<PathBuf>>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.{}.tmp", std::process::id()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path).inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })
}

impl Output {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, AppError> {
        let out = Output {
            root: root.into(),
            files: Mutex::new(Vec::new()),
            dirs: Mutex::new(Vec::new()),
        };
        out.ensure_dir(&out.root.clone())?;
        Ok(out)
    }

    fn ensure_dir(&self, dir: &Path) -> Result<(), AppError> {
        let mut missing = Vec::new();
        let mut d = Some(dir);
        while let Some(p) = d {
            if p.as_os_str().is_empty() || p.exists() {
                break;
            }
            missing.push(p.to_path_buf());
            d = p.parent();
        }
        std::fs::create_dir_all(dir)?;
        self.dirs.lock().unwrap().extend(missing.into_iter().rev());
        Ok(())
    }

    pub fn write_bytes(&self, rel: &str, bytes: &[u8]) -> Result<(), AppError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            self.ensure_dir(parent)?;
        }
        write_atomic(&path, bytes)?;
        self.files.lock().unwrap().push(FileEntry {
            path: rel.to_string(),
            sha256: hex::encode(Sha256::digest(bytes)),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_table(&self, rel: &str, table: &Table) -> Result<(), AppError> {
        let mut buf = Vec::new();
        table.write_to(&mut buf)?;
        self.write_bytes(rel, &buf)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), AppError> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.write_bytes(rel, &buf)
    }

    /// Writes the manifest last; the file list is sorted by path.
    pub fn finish(
        self,
        command: &str,
        config: Value,
        wall_time_s: f64,
        headline: Map<String, Value>,
    ) -> Result<RunManifest, AppError> {
        let mut files = self.files.lock().unwrap().clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            wall_time_s,
            files,
            headline,
        };
        let mut buf = serde_json::to_vec_pretty(&manifest)?;
        buf.push(b'\n');
        if let Err(e) = write_atomic(&self.root.join(MANIFEST), &buf) {
            self.discard();
            return Err(e.into());
        }
        Ok(manifest)
    }

    /// Removes every file written so far and the directories this run
    /// created.
    pub fn discard(&self) {
        for f in self.files.lock().unwrap().drain(..) {
            let _ = std::fs::remove_file(self.root.join(&f.path));
        }
        for d in self.dirs.lock().unwrap().drain(..).rev() {
            let _ = std::fs::remove_dir(d);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discard_removes_files_and_new_dirs() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().join("a/b");
        let out = Output::create(&root).unwrap();
        out.write_bytes("sub/x.csv", b"t,P\n").unwrap();
        assert!(root.join("sub/x.csv").exists());
        out.discard();
        assert!(!tmp.path().join("a").exists());
        assert!(tmp.path().exists());
    }

    #[test]
    fn manifest_lists_checksums() {
        let tmp = tempfile::tempdir().unwrap();
        let out = Output::create(tmp.path()).unwrap();
        out.write_bytes("b.csv", b"abc").unwrap();
        out.write_bytes("a.csv", b"").unwrap();
        let m = out.finish("test", Value::Null, 0.0, Map::new()).unwrap();
        assert_eq!(m.files[0].path, "a.csv");
        assert_eq!(
            m.files[1].sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(tmp.path().join(MANIFEST).exists());
    }
}
