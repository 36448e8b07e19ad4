//! Result directories: files are staged in memory, written under a
//! `.partial` sibling and renamed into place once complete.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug, Default, Clone)]
pub struct Artifacts {
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts {
    pub fn add(&mut self, path: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(path.into(), bytes);
    }

    pub fn add_text(&mut self, path: impl Into<String>, text: String) {
        self.add(path, text.into_bytes());
    }

    /// Move every file of `other` under `prefix/`.
    pub fn absorb(&mut self, prefix: &str, other: Artifacts) {
        for (p, b) in other.files {
            self.files.insert(format!("{prefix}/{p}"), b);
        }
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
pub struct RunInfo {
    pub command: String,
    pub scenario: String,
    pub scenario_file: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub library_version: String,
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    run: &'a RunInfo,
    file: Vec<FileEntry>,
}

pub fn manifest_text(info: &RunInfo, artifacts: &Artifacts) -> String {
    let file = artifacts
        .files
        .iter()
        .map(|(p, b)| FileEntry { path: p.clone(), sha256: sha256_hex(b), bytes: b.len() })
        .collect();
    toml::to_string(&Manifest { run: info, file }).expect("manifest serializes")
}

fn staging_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_else(|| "out".into());
    name.push(".partial");
    out.with_file_name(name)
}

fn write_all(dir: &Path, artifacts: &Artifacts, manifest: &str) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    for (rel, bytes) in &artifacts.files {
        let p = dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        fs::write(&p, bytes).map_err(CliError::io(&p))?;
    }
    let m = dir.join(MANIFEST);
    fs::write(&m, manifest).map_err(CliError::io(&m))
}

/// Write the directory atomically. An existing directory is replaced only if
/// it is a previous result (contains a manifest) or empty.
pub fn commit(out: &Path, info: &RunInfo, artifacts: &Artifacts) -> CliResult<()> {
    if out.exists() {
        let is_result = out.join(MANIFEST).is_file();
        let is_empty = fs::read_dir(out).map_err(CliError::io(out))?.next().is_none();
        if !(is_result || is_empty) {
            return Err(CliError::Validation(format!(
                "output directory {} exists and is not a previous result; refusing to overwrite",
                out.display()
            )));
        }
    }
    let staging = staging_path(out);
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(CliError::io(&staging))?;
    }
    let manifest = manifest_text(info, artifacts);
    if let Err(e) = write_all(&staging, artifacts, &manifest) {
        let _ = fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        fs::remove_dir_all(out).map_err(CliError::io(out))?;
    }
    fs::rename(&staging, out).map_err(|e| {
        let _ = fs::remove_dir_all(&staging);
        CliError::io(out)(e)
    })
}
