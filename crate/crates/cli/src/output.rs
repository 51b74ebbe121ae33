//! Atomic file output and the reproducibility sidecar.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::CliError;

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Writes through a temp file in the target directory and renames it into
/// place, so an interrupted run never leaves a truncated file at `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    let fail = |e: std::io::Error| CliError::Runtime(format!("writing {}: {e}", path.display()));
    let mut tmp = NamedTempFile::new_in(parent_dir(path)).map_err(fail)?;
    tmp.write_all(contents).map_err(fail)?;
    tmp.as_file().sync_all().map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}

/// Output directories must already exist; checked before any work starts.
pub fn check_writable_target(path: &Path) -> Result<(), CliError> {
    let dir = parent_dir(path);
    if !dir.is_dir() {
        return Err(CliError::Validation(format!(
            "output directory {} does not exist",
            dir.display()
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    tool_version: &'static str,
    model_format_version: u32,
    argv: Vec<String>,
    seed: Option<u64>,
    threads: usize,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a serde_json::Value>,
}

/// `<artifact>.run.json` next to the artifact. Kept out of the artifact so the
/// artifact bytes depend only on inputs and seed.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name: OsString = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    artifact.with_file_name(name)
}

pub fn write_run_record(
    sidecar: &Path,
    seed: Option<u64>,
    outputs: &[&Path],
    extra: Option<&serde_json::Value>,
) -> Result<(), CliError> {
    let record = RunRecord {
        tool: "ppg-qa",
        tool_version: env!("CARGO_PKG_VERSION"),
        model_format_version: ppg_qa_core::ensemble::FORMAT_VERSION,
        argv: std::env::args().collect(),
        seed,
        threads: rayon::current_num_threads(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        extra,
    };
    let mut text = serde_json::to_string_pretty(&record).expect("run record serializes");
    text.push('\n');
    write_atomic(sidecar, text.as_bytes())
}

/// Removes an empty directory left in the way of a directory rename.
pub fn clear_empty_dir(path: &Path) -> Result<(), CliError> {
    if path.is_dir() {
        let empty = fs::read_dir(path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?
            .next()
            .is_none();
        if !empty {
            return Err(CliError::Validation(format!(
                "output directory {} exists and is not empty",
                path.display()
            )));
        }
        fs::remove_dir(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    } else if path.exists() {
        return Err(CliError::Validation(format!(
            "{} exists and is not a directory",
            path.display()
        )));
    }
    Ok(())
}
