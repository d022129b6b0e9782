//! Output directory bookkeeping and the JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use indireg::grid::ScalarImage;
use indireg::io::{save_igrd, save_isin, save_pgm16};
use indireg::tomo::Sinogram;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Hash of the JSON form of a resolved configuration.
pub fn config_hash(config: &impl Serialize) -> Result<String, CliError> {
    let text = serde_json::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sha256_hex(text.as_bytes()))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'static str,
    core_version: &'static str,
    config_sha256: &'a str,
    seed: u64,
    threads: usize,
    files: &'a [FileEntry],
}

/// Collects written files and describes them in `manifest.json` on [`finish`](Self::finish).
pub struct OutputDir {
    root: PathBuf,
    command: String,
    config_sha256: String,
    seed: u64,
    threads: usize,
    files: Vec<FileEntry>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(
        root: &Path,
        command: &str,
        config_sha256: String,
        seed: u64,
        threads: usize,
    ) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            command: command.into(),
            config_sha256,
            seed,
            threads,
            files: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file already written under the root.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let path = self.path(name);
        let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
        self.files.push(FileEntry {
            path: name.replace('\\', "/"),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    fn ensure_parent(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        Ok(path)
    }

    /// Writes `<stem>.igrd` and a `<stem>.pgm` preview.
    pub fn image(&mut self, stem: &str, img: &ScalarImage) -> Result<(), CliError> {
        let igrd = format!("{stem}.igrd");
        let path = self.ensure_parent(&igrd)?;
        save_igrd(&path, img).map_err(|e| io_err(&path, e))?;
        self.record(&igrd)?;
        let pgm = format!("{stem}.pgm");
        let path = self.path(&pgm);
        save_pgm16(&path, img).map_err(|e| io_err(&path, e))?;
        self.record(&pgm)
    }

    pub fn sinogram(&mut self, stem: &str, sino: &Sinogram) -> Result<(), CliError> {
        let name = format!("{stem}.isin");
        let path = self.ensure_parent(&name)?;
        save_isin(&path, sino).map_err(|e| io_err(&path, e))?;
        self.record(&name)
    }

    /// Writes serializable rows as a CSV file with a header.
    pub fn csv<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), CliError> {
        let path = self.ensure_parent(name)?;
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        drop(w);
        self.record(name)
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            command: &self.command,
            tool_version: env!("CARGO_PKG_VERSION"),
            core_version: indireg::VERSION,
            config_sha256: &self.config_sha256,
            seed: self.seed,
            threads: self.threads,
            files: &self.files,
        };
        let path = self.root.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}
