//! Per-command manifest: the resolved configuration and the sha256 digest of
//! every file read and written. No timestamps, so identical runs produce
//! identical manifests.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    /// Keyed by file name.
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

#[derive(Default)]
pub struct Files {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Files {
    pub fn input(&mut self, p: impl Into<PathBuf>) {
        self.inputs.push(p.into());
    }

    pub fn output(&mut self, p: impl Into<PathBuf>) {
        self.outputs.push(p.into());
    }
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>, CliError> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
            Ok((name, sha256_file(p)?))
        })
        .collect()
}

/// Writes `manifest.<command>.json` into `out` and returns its path.
pub fn write(out: &Path, command: &str, config: &RunConfig, files: &Files) -> Result<PathBuf, CliError> {
    let m = Manifest {
        command,
        config,
        inputs: digests(&files.inputs)?,
        outputs: digests(&files.outputs)?,
    };
    let path = out.join(format!("manifest.{command}.json"));
    let text = serde_json::to_string_pretty(&m).map_err(rtqa::Error::from)?;
    fs::write(&path, text + "\n").map_err(rtqa::Error::from)?;
    Ok(path)
}
