//! The run manifest written next to every command's outputs.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::errors::CliError;

/// On-disk format identifiers, recorded so a manifest pins what its
/// artifacts were written as.
#[derive(Serialize)]
pub struct FormatVersions {
    pub viewgrid: &'static str,
    pub checkpoint: &'static str,
}

/// Everything needed to reproduce a run: re-invoking `argv` must rewrite
/// every listed output byte-for-byte (the manifest itself differs only in
/// `timestamp_epoch_secs`).
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub formats: FormatVersions,
    pub timestamp_epoch_secs: u64,
}

/// Writes `manifest.json` into `out_dir` and returns its path.
pub fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let manifest = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        seed,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        formats: FormatVersions { viewgrid: "VGRD1", checkpoint: "GLMP1" },
        timestamp_epoch_secs: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = out_dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Format(format!("encoding manifest: {e}")))?;
    text.push('\n');
    std::fs::write(&path, text)?;
    Ok(path)
}
