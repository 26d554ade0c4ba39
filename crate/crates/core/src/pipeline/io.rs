//! Reading pipeline inputs and serializing JSON artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use super::error::{ErrorKind, StageFailure};
use crate::config::PipelineConfig;
use crate::cube::HyperCube;
use crate::envi::read_envi;
use crate::mask::{BinaryMask, MaskError};
use crate::proposals::{ProposalsFile, SchemaMode};

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{path}: {source}")]
    Mask {
        path: PathBuf,
        #[source]
        source: MaskError,
    },
    #[error("{path}: {reason}")]
    Wavelengths { path: PathBuf, reason: String },
}

impl InputError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            InputError::Read { .. } => ErrorKind::Domain,
            _ => ErrorKind::Format,
        }
    }
}

fn read_text(path: &Path) -> Result<String, InputError> {
    fs::read_to_string(path).map_err(|source| InputError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a config file. Relative input paths are resolved against the
/// file's directory.
pub fn read_config(path: &Path) -> Result<PipelineConfig, InputError> {
    let text = read_text(path)?;
    let mut config: PipelineConfig = serde_json::from_str(&text).map_err(|source| InputError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    let inputs = &mut config.inputs;
    for p in [
        &mut inputs.cube,
        &mut inputs.proposals,
        &mut inputs.truth,
        &mut inputs.wavelengths,
    ] {
        if let Some(rel) = p.as_mut().filter(|p| p.is_relative()) {
            *rel = base.join(&*rel);
        }
    }
    if let Some(sidecar) = config
        .sidecar
        .as_mut()
        .filter(|p| p.is_relative() && p.components().count() > 1)
    {
        *sidecar = base.join(&*sidecar);
    }
    Ok(config)
}

/// Band centres in nm from a text file: numbers separated by whitespace or
/// commas, `#` starts a comment.
pub fn read_wavelengths(path: &Path) -> Result<Vec<f64>, InputError> {
    let text = read_text(path)?;
    let bad = |reason: String| InputError::Wavelengths {
        path: path.to_path_buf(),
        reason,
    };
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for tok in line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            let v: f64 = tok.parse().map_err(|_| bad(format!("`{tok}` is not a number")))?;
            if !v.is_finite() {
                return Err(bad(format!("`{tok}` is not finite")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(bad("no wavelengths found".into()));
    }
    Ok(out)
}

/// Loads an ENVI cube; an explicit wavelength file replaces header metadata.
pub fn load_cube(header: &Path, wavelengths: Option<&Path>) -> Result<HyperCube, StageFailure> {
    let cube = read_envi(header)?;
    match wavelengths {
        Some(path) => {
            let wl = read_wavelengths(path)?;
            if cube.wavelengths().is_some() {
                log::info!("wavelengths from {} replace the header values", path.display());
            }
            Ok(cube.with_wavelengths(wl)?)
        }
        None => Ok(cube),
    }
}

/// Reads a mask from PNG (any non-zero pixel is on) or from RLE JSON.
pub fn read_mask(path: &Path) -> Result<BinaryMask, InputError> {
    let is_png = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"));
    let mask = if is_png {
        let img = image::open(path)
            .map_err(|source| InputError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_luma8();
        let bits: Vec<bool> = img.as_raw().iter().map(|&v| v != 0).collect();
        BinaryMask::from_bitmap(img.width() as usize, img.height() as usize, &bits)
    } else {
        return serde_json::from_str(&read_text(path)?).map_err(|source| InputError::Json {
            path: path.to_path_buf(),
            source,
        });
    };
    mask.map_err(|source| InputError::Mask {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_proposals(path: &Path, mode: SchemaMode) -> Result<ProposalsFile, StageFailure> {
    let file = ProposalsFile::parse(&read_text(path)?, mode)?;
    file.validate()?;
    Ok(file)
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("artifact types serialize");
    out.push(b'\n');
    out
}
