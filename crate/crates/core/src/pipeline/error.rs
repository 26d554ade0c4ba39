use std::error::Error as StdError;
use std::fmt;

use crate::analysis::{MwmError, PcaError};
use crate::composite::CompositeError;
use crate::config::ConfigError;
use crate::cube::CubeError;
use crate::envi::EnviError;
use crate::filtering::FilterError;
use crate::mask::MaskError;
use crate::maskproj::DimensionMismatch;
use crate::proposals::SchemaError;

use super::io::InputError;
use super::sidecar::SidecarError;

/// Broad failure class; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid values, mismatched dimensions, missing inputs.
    Domain,
    /// Malformed JSON, headers, masks or proposals.
    Format,
    /// The segmentation sidecar could not produce proposals.
    Sidecar,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Domain => 2,
            ErrorKind::Format => 3,
            ErrorKind::Sidecar => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Load,
    Composite,
    Sidecar,
    Filter,
    ApplyMask,
    Stats,
    Pca,
    Mwm,
    Eval,
    Manifest,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Composite => "composite",
            Stage::Sidecar => "sidecar",
            Stage::Filter => "filter",
            Stage::ApplyMask => "apply-mask",
            Stage::Stats => "stats",
            Stage::Pca => "pca",
            Stage::Mwm => "mwm",
            Stage::Eval => "eval",
            Stage::Manifest => "manifest",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

type BoxError = Box<dyn StdError + Send + Sync + 'static>;

/// An error raised inside a stage before the stage name is attached.
#[derive(Debug)]
pub struct StageFailure {
    pub kind: ErrorKind,
    pub source: BoxError,
}

impl StageFailure {
    pub fn new(kind: ErrorKind, source: impl Into<BoxError>) -> Self {
        Self {
            kind,
            source: source.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Domain, message.into())
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Format, message.into())
    }
}

macro_rules! failure_from {
    ($($ty:ty => $kind:expr),* $(,)?) => {
        $(impl From<$ty> for StageFailure {
            fn from(e: $ty) -> Self {
                let kind: fn(&$ty) -> ErrorKind = $kind;
                StageFailure::new(kind(&e), e)
            }
        })*
    };
}

failure_from! {
    ConfigError => |_| ErrorKind::Domain,
    CubeError => |_| ErrorKind::Domain,
    MaskError => |_| ErrorKind::Format,
    DimensionMismatch => |_| ErrorKind::Domain,
    SchemaError => |_| ErrorKind::Format,
    PcaError => |_| ErrorKind::Domain,
    MwmError => |_| ErrorKind::Domain,
    SidecarError => |_| ErrorKind::Sidecar,
    serde_json::Error => |_| ErrorKind::Format,
    std::io::Error => |_| ErrorKind::Domain,
    EnviError => |e| match e {
        EnviError::Io { .. }
        | EnviError::PayloadNotFound(_)
        | EnviError::Cube(_)
        | EnviError::LossyNarrowing { .. } => ErrorKind::Domain,
        _ => ErrorKind::Format,
    },
    CompositeError => |e| match e {
        CompositeError::Png(_) => ErrorKind::Format,
        _ => ErrorKind::Domain,
    },
    FilterError => |e| match e {
        FilterError::UnknownPrompt { .. } => ErrorKind::Format,
        _ => ErrorKind::Domain,
    },
    InputError => |e| e.kind(),
}

/// A stage failure tagged with the stage it happened in.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: Stage,
    pub kind: ErrorKind,
    pub source: BoxError,
}

impl PipelineError {
    pub fn new(stage: Stage, failure: impl Into<StageFailure>) -> Self {
        let f = failure.into();
        Self {
            stage,
            kind: f.kind,
            source: f.source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.source)
    }
}

impl StdError for PipelineError {
    fn source(&self) -> Option<&(dyn StdError + 'static)> {
        Some(self.source.as_ref())
    }
}
