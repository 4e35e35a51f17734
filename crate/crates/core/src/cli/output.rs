//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub tool_version: String,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
    pub files: Vec<FileRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Shortest round-trip decimal form; non-finite values are rejected.
pub fn num(x: f64) -> Result<String> {
    if !x.is_finite() {
        return Err(Error::NonFinite(format!("output cell ({x})")));
    }
    Ok(format!("{x}"))
}

/// Collects every file a subcommand writes so the manifest can hash them.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    started_at: u64,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            started_at: now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Records a file written elsewhere under the output directory.
    pub fn register(&mut self, rel: &str) {
        if !self.files.iter().any(|f| f == rel) {
            self.files.push(rel.to_string());
        }
    }

    pub fn write(&mut self, rel: &str, contents: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents)?;
        self.register(rel);
        Ok(())
    }

    /// Header plus rows, every row the header's width.
    pub fn write_csv(&mut self, rel: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(header).map_err(io)?;
        for r in rows {
            if r.len() != header.len() {
                return Err(Error::ShapeMismatch {
                    op: "csv row",
                    left: vec![r.len()],
                    right: vec![header.len()],
                });
            }
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        self.write(rel, &bytes)
    }

    /// Hashes every recorded file and writes the manifest through a rename.
    pub fn finish(self, subcommand: &str, config_hash: &str) -> Result<RunManifest> {
        let mut files = Vec::with_capacity(self.files.len());
        for rel in &self.files {
            let p = self.path(rel);
            files.push(FileRecord {
                path: rel.clone(),
                sha256: sha256_file(&p)?,
                bytes: fs::metadata(&p)?.len(),
            });
        }
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config_hash: config_hash.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at: self.started_at,
            finished_at: now(),
            files,
        };
        let tmp = self.path(".manifest.json.tmp");
        fs::write(&tmp, serde_json::to_string_pretty(&manifest)? + "\n")?;
        fs::rename(&tmp, self.path(MANIFEST_FILE))?;
        Ok(manifest)
    }
}

/// Checks every manifest hash against the files on disk; returns the
/// mismatching paths.
pub fn verify_manifest(dir: &Path) -> Result<Vec<String>> {
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
    let mut bad = Vec::new();
    for f in &m.files {
        match sha256_file(&dir.join(&f.path)) {
            Ok(h) if h == f.sha256 => {}
            _ => bad.push(f.path.clone()),
        }
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_hashes_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::new(dir.path()).unwrap();
        o.write_csv("a.csv", &["x", "y"], &[vec![num(0.1).unwrap(), num(1e-8).unwrap()]]).unwrap();
        o.write("sub/b.txt", b"hi").unwrap();
        let m = o.finish("test", "abc").unwrap();
        assert_eq!(m.files.len(), 2);
        assert_eq!(fs::read_to_string(dir.path().join("a.csv")).unwrap(), "x,y\n0.1,0.00000001\n");
        assert!(verify_manifest(dir.path()).unwrap().is_empty());
        fs::write(dir.path().join("a.csv"), "x,y\n").unwrap();
        assert_eq!(verify_manifest(dir.path()).unwrap(), vec!["a.csv".to_string()]);
    }

    #[test]
    fn non_finite_cells_are_rejected() {
        assert!(num(f64::NAN).is_err());
        assert!(num(f64::INFINITY).is_err());
        assert_eq!(num(-0.25).unwrap(), "-0.25");
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut o = Outputs::new(dir.path()).unwrap();
        assert!(o.write_csv("a.csv", &["x"], &[vec![]]).is_err());
    }
}
