//! Atomic file output and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::FORMAT_VERSION;

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskStatus {
    pub name: String,
    /// `ok` or the error message.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub command: String,
    pub config_sha256: String,
    /// Seconds since the Unix epoch.
    pub started: u64,
    pub finished: u64,
    pub tasks: Vec<TaskStatus>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<RunManifest> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Output directory that records every file it writes.
#[derive(Debug)]
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<OutputFile>,
    tasks: Vec<TaskStatus>,
    started: u64,
}

impl OutputDir {
    pub fn create(dir: &Path) -> std::io::Result<OutputDir> {
        fs::create_dir_all(dir)?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            tasks: Vec::new(),
            started: now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    /// Writes via a temporary file in the same directory and a rename.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)?;
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> anyhow::Result<()> {
        let bytes = table.to_bytes()?;
        self.write(name, &bytes)?;
        Ok(())
    }

    pub fn task(&mut self, name: impl Into<String>, status: impl Into<String>) {
        self.tasks.push(TaskStatus {
            name: name.into(),
            status: status.into(),
        });
    }

    /// Writes `manifest.json` listing every emitted file.
    pub fn finish(mut self, command: &str, config_bytes: &[u8]) -> anyhow::Result<RunManifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            format_version: FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_bytes),
            started: self.started,
            finished: now(),
            tasks: self.tasks,
            outputs: self.files,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir.join(MANIFEST_NAME), &bytes)?;
        Ok(manifest)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// A CSV table. Floats use Rust's shortest round-trip formatting.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Table {
        Table {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> anyhow::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        Ok(w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?)
    }

    pub fn read(path: &Path) -> anyhow::Result<Table> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|x| x.iter().map(String::from).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e16)`.
pub fn fmt(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-4..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 1e-300, -2.5e17, std::f64::consts::PI, 4.266955553143359e-14, 0.0, 1e-4] {
            assert_eq!(fmt(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt(4.5e-14), "4.5e-14");
        assert_eq!(fmt(2.0), "2");
    }

    #[test]
    fn manifest_lists_written_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![fmt(1.5), fmt(2.0)]);
        out.write_csv("t.csv", &t).unwrap();
        out.write("t.csv", b"a,b\n").unwrap();
        let m = out.finish("kernel", b"{}").unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].sha256, sha256_hex(b"a,b\n"));
        let back = RunManifest::load(&dir.path().join(MANIFEST_NAME)).unwrap();
        assert_eq!(back, m);
        let read = Table::read(&dir.path().join("t.csv")).unwrap();
        assert_eq!(read.header, vec!["a", "b"]);
    }
}
