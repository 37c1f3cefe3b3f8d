//! Output-directory bookkeeping: an exclusive lock per stage, the manifest
//! and line-oriented logs.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{file_checksum, write_atomic};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
const LOCK: &str = ".lock";

/// Held while a stage writes into `dir`; the lock file is removed on drop.
#[derive(Debug)]
pub struct RunDir {
    dir: PathBuf,
    lock: PathBuf,
}

impl RunDir {
    /// Creates `dir` if needed and takes its lock. Fails if another stage
    /// holds it.
    pub fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let lock = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&lock) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(Error::invalid(format!(
                    "{} is locked by another run; remove {} if no run is active",
                    dir.display(),
                    lock.display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        Ok(RunDir {
            dir: dir.to_path_buf(),
            lock,
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// A manifest of the same stage and configuration whose files all still
    /// match their recorded checksums.
    pub fn completed(&self, stage: &str, config: &serde_json::Value) -> Option<Manifest> {
        let bytes = std::fs::read(self.path(MANIFEST)).ok()?;
        let m: Manifest = serde_json::from_slice(&bytes).ok()?;
        if m.stage != stage || &m.config != config {
            return None;
        }
        let intact = m
            .checksums
            .iter()
            .all(|(name, sum)| file_checksum(&self.path(name)).is_ok_and(|s| &s == sum));
        intact.then_some(m)
    }

    pub fn write_manifest(&self, m: &Manifest) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(m)?;
        bytes.push(b'\n');
        write_atomic(&self.path(MANIFEST), &bytes)
    }
}

impl Drop for RunDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.lock);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Not reproducible; every other field is.
    pub wall_time_secs: f64,
    /// SHA-256 of each output file, keyed by file name within the run dir.
    pub checksums: BTreeMap<String, String>,
    pub dev_scores: serde_json::Value,
}

/// Writes one JSON object per line.
pub struct JsonLines {
    w: BufWriter<File>,
}

impl JsonLines {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(JsonLines {
            w: BufWriter::new(File::create(path)?),
        })
    }

    pub fn write<T: Serialize>(&mut self, row: &T) -> Result<()> {
        serde_json::to_writer(&mut self.w, row)?;
        self.w.write_all(b"\n")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunDir::acquire(dir.path()).unwrap();
        assert!(RunDir::acquire(dir.path()).is_err());
        drop(a);
        assert!(RunDir::acquire(dir.path()).is_ok());
    }

    #[test]
    fn completed_requires_intact_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let rd = RunDir::acquire(dir.path()).unwrap();
        std::fs::write(rd.path("out.bin"), b"abc").unwrap();
        let config = serde_json::json!({"seed": "1"});
        let m = Manifest {
            stage: "s".into(),
            seed: 1,
            config: config.clone(),
            wall_time_secs: 0.0,
            checksums: [("out.bin".to_string(), file_checksum(&rd.path("out.bin")).unwrap())].into(),
            dev_scores: serde_json::Value::Null,
        };
        rd.write_manifest(&m).unwrap();
        assert_eq!(rd.completed("s", &config), Some(m));
        assert!(rd.completed("t", &config).is_none());
        std::fs::write(rd.path("out.bin"), b"abd").unwrap();
        assert!(rd.completed("s", &config).is_none());
    }
}
