use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// Files written by one command, hashed into `manifest.json` at the end.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
    bytes: u64,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    status: &'a str,
    time_units: &'a str,
    config: &'a C,
    files: Vec<ManifestEntry>,
}

pub const MANIFEST: &str = "manifest.json";

pub const TIME_UNITS: &str =
    "trajectory and pattern times: slow time tau = gamma * t; pattern file names carry physical t";

impl Outputs {
    pub fn create(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::Numerical(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents)
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let s = serde_json::to_string_pretty(value)
            .map_err(|e| Failure::Numerical(format!("serializing {name}: {e}")))?;
        self.write(name, s + "\n")
    }

    /// Hashes every file as it now is on disk and writes the manifest.
    pub fn finish<C: Serialize>(&self, command: &str, ok: bool, config: &C) -> Result<(), Failure> {
        let mut names = self.files.clone();
        names.sort();
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            let bytes = fs::read(self.dir.join(&name))
                .map_err(|e| Failure::Numerical(format!("cannot read back {name}: {e}")))?;
            files.push(ManifestEntry {
                sha256: hex::encode(Sha256::digest(&bytes)),
                bytes: bytes.len() as u64,
                path: name,
            });
        }
        let m = Manifest {
            command,
            status: if ok { "ok" } else { "failed" },
            time_units: TIME_UNITS,
            config,
            files,
        };
        let s = serde_json::to_string_pretty(&m).map_err(|e| Failure::Numerical(e.to_string()))?;
        let path = self.dir.join(MANIFEST);
        fs::write(&path, s + "\n")
            .map_err(|e| Failure::Numerical(format!("cannot write {}: {e}", path.display())))
    }
}
