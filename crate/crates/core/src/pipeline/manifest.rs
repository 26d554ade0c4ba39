//! Run manifest: config snapshot, input and output digests, stage timings.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::error::{PipelineError, Stage, StageFailure};
use super::io::json_bytes;
use crate::config::PipelineConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// Relative to the output directory.
    pub outputs: Vec<FileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
    pub inputs: Vec<InputRecord>,
    pub stages: Vec<StageRecord>,
    /// Wall-clock milliseconds per stage. The only field that varies between
    /// identical runs.
    pub timings_ms: BTreeMap<String, u64>,
}

impl RunManifest {
    pub fn new(config: Option<PipelineConfig>) -> Self {
        Self {
            tool: "hsmask".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config,
            inputs: Vec::new(),
            stages: Vec::new(),
            timings_ms: BTreeMap::new(),
        }
    }

    /// Re-hashes every listed output under `out_dir`; returns the paths that
    /// are missing or changed.
    pub fn verify_outputs(&self, out_dir: &Path) -> Vec<PathBuf> {
        self.stages
            .iter()
            .flat_map(|s| &s.outputs)
            .filter(|rec| match fs::read(out_dir.join(&rec.path)) {
                Ok(bytes) => sha256_hex(&bytes) != rec.sha256,
                Err(_) => true,
            })
            .map(|rec| rec.path.clone())
            .collect()
    }
}

/// Collects the files a single stage writes.
pub struct StageWriter<'a> {
    out_dir: &'a Path,
    outputs: Vec<FileRecord>,
}

impl StageWriter<'_> {
    pub fn out_dir(&self) -> &Path {
        self.out_dir
    }

    /// Writes `bytes` to `name` inside the output directory and records its digest.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, StageFailure> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes)?;
        self.outputs.push(FileRecord {
            path: PathBuf::from(name),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf, StageFailure> {
        self.write(name, &json_bytes(value))
    }

    /// Records a file some other process wrote into the output directory.
    pub fn adopt(&mut self, name: &str) -> Result<PathBuf, StageFailure> {
        let path = self.out_dir.join(name);
        let bytes = fs::read(&path)?;
        self.outputs.push(FileRecord {
            path: PathBuf::from(name),
            sha256: sha256_hex(&bytes),
        });
        Ok(path)
    }
}

/// Output directory plus the manifest being built for it.
pub struct Workspace {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Workspace {
    pub fn create(out_dir: &Path, config: Option<PipelineConfig>) -> Result<Self, PipelineError> {
        fs::create_dir_all(out_dir).map_err(|e| PipelineError::new(Stage::Config, e))?;
        Ok(Self {
            out_dir: out_dir.to_path_buf(),
            manifest: RunManifest::new(config),
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    /// Hashes an input file into the manifest.
    pub fn record_input(&mut self, role: &str, path: &Path) -> Result<(), PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError::new(Stage::Load, e))?;
        self.manifest.inputs.push(InputRecord {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Runs `f` as `stage`, timing it and recording what it wrote.
    pub fn run<T>(
        &mut self,
        stage: Stage,
        f: impl FnOnce(&mut StageWriter<'_>) -> Result<T, StageFailure>,
    ) -> Result<T, PipelineError> {
        let start = Instant::now();
        let mut writer = StageWriter {
            out_dir: &self.out_dir,
            outputs: Vec::new(),
        };
        let value = f(&mut writer).map_err(|e| PipelineError::new(stage, e))?;
        let outputs = writer.outputs;
        self.manifest
            .timings_ms
            .insert(stage.name().to_string(), start.elapsed().as_millis() as u64);
        log::info!("{stage}: wrote {} file(s)", outputs.len());
        self.manifest.stages.push(StageRecord {
            stage: stage.name().to_string(),
            outputs,
        });
        Ok(value)
    }

    /// Writes `manifest.json` and returns the final manifest.
    pub fn finish(self) -> Result<RunManifest, PipelineError> {
        let path = self.out_dir.join(MANIFEST_FILE);
        fs::write(&path, json_bytes(&self.manifest)).map_err(|e| PipelineError::new(Stage::Manifest, e))?;
        Ok(self.manifest)
    }
}
