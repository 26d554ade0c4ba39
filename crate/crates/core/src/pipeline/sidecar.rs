//! Invocation of the external segmentation sidecar.
//!
//! The sidecar is any executable accepting
//! `--image <png> --config <json> --out <json>` and exiting 0 after writing a
//! proposals file.

use std::env;
use std::path::{Path, PathBuf};
use std::process::Command;

use thiserror::Error;

/// Overrides the sidecar executable named in the config.
pub const SIDECAR_ENV: &str = "HSMASK_SIDECAR";

#[derive(Debug, Error)]
pub enum SidecarError {
    #[error("no proposals file given and no sidecar configured (set `sidecar` in the config or {SIDECAR_ENV})")]
    NotConfigured,
    #[error("cannot start sidecar {path}: {source}")]
    Spawn {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sidecar exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("sidecar exited successfully but did not write {0}")]
    MissingOutput(PathBuf),
    #[error("sidecar output does not match the config: {0}")]
    ConfigEcho(String),
}

/// The environment variable wins over the config entry; empty values are ignored.
pub fn resolve_sidecar(configured: Option<&Path>) -> Option<PathBuf> {
    env::var_os(SIDECAR_ENV)
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| configured.map(Path::to_path_buf))
}

pub fn run_sidecar(exe: &Path, image: &Path, config: &Path, out: &Path) -> Result<(), SidecarError> {
    log::info!("running sidecar {}", exe.display());
    let output = Command::new(exe)
        .arg("--image")
        .arg(image)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|source| SidecarError::Spawn {
            path: exe.to_path_buf(),
            source,
        })?;
    if !output.status.success() {
        return Err(SidecarError::Failed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    if !out.is_file() {
        return Err(SidecarError::MissingOutput(out.to_path_buf()));
    }
    Ok(())
}
