//! Run manifests: what was run, with which resolved settings, and the
//! digests of everything read and written.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cli::Command;
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::io::{read_json, sha256_file, write_json, FileDigest};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Timing facts of a simulated acquisition that analysis needs later.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub duration_ps: i64,
    pub rep_period_ps: f64,
    pub n_pulses: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub argv: Vec<String>,
    pub command: Command,
    /// Settings after flags were applied.
    pub config: Config,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the manifest's directory.
    pub outputs: Vec<FileDigest>,
    pub wall_clock_s: f64,
    pub acquisition: Option<Acquisition>,
    /// Quantities computed from the settings, such as a calibrated
    /// extra-photon probability.
    pub derived: BTreeMap<String, f64>,
}

/// Analysis provenance embedded in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: Config,
    pub inputs: Vec<FileDigest>,
}

pub fn version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

pub fn read_manifest(path: &Path) -> CliResult<Manifest> {
    read_json(path)
}

pub fn write_manifest(path: &Path, m: &Manifest) -> CliResult<()> {
    write_json(path, m)
}

/// Acquisition block of the manifest next to a timestamp directory, if any.
pub fn acquisition_of(dir: &Path) -> CliResult<Option<Acquisition>> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Ok(None);
    }
    Ok(read_manifest(&path)?.acquisition)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Check {
    Ok(PathBuf),
    Mismatch(PathBuf),
    Missing(PathBuf),
}

/// Recomputes every digest in the manifest at `path`.
pub fn verify(path: &Path) -> CliResult<Vec<Check>> {
    let m = read_manifest(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let outputs = m.outputs.iter().map(|d| (dir.join(&d.path), d));
    let inputs = m.inputs.iter().map(|d| (d.path.clone(), d));
    Ok(outputs
        .chain(inputs)
        .map(|(p, d)| match sha256_file(&p) {
            Ok((sha, _)) if sha == d.sha256 => Check::Ok(p),
            Ok(_) => Check::Mismatch(p),
            Err(_) => Check::Missing(p),
        })
        .collect())
}

/// Fails unless every check passed.
pub fn require_all_ok(checks: &[Check]) -> CliResult<()> {
    let missing: Vec<_> = checks.iter().filter_map(|c| if let Check::Missing(p) = c { Some(p) } else { None }).collect();
    if let Some(p) = missing.first() {
        return Err(CliError::Io(format!("{}: missing or unreadable", p.display())));
    }
    let bad: Vec<String> =
        checks.iter().filter_map(|c| if let Check::Mismatch(p) = c { Some(p.display().to_string()) } else { None }).collect();
    if !bad.is_empty() {
        return Err(CliError::Analysis(format!("digest mismatch: {}", bad.join(", "))));
    }
    Ok(())
}
