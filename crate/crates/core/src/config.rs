//! Pipeline configuration: segmenter and detector hyperparameters, prompt
//! roles, box-matching margin and the downstream analysis switches.
//!
//! The JSON form mirrors the field names below and is shared with the model
//! sidecar, which echoes the fields it used back into `proposals.json`.

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::composite::{BandTriple, Stretch};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("config needs at least one prompt")]
    NoPrompts,
    #[error("`{field}` must be in [0, 1], got {value}")]
    OutOfUnitRange { field: String, value: f64 },
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("prompt {0} has empty text")]
    EmptyPrompt(usize),
    #[error("invalid stretch ({0}, {1})")]
    Stretch(f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptRole {
    /// Keep segment proposals matched by this prompt's detections.
    Keep,
    /// Remove segment proposals matched by this prompt's detections.
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub role: PromptRole,
    pub box_threshold: f64,
    pub text_threshold: f64,
}

impl Prompt {
    pub fn keep(text: &str, box_threshold: f64, text_threshold: f64) -> Self {
        Self {
            text: text.to_string(),
            role: PromptRole::Keep,
            box_threshold,
            text_threshold,
        }
    }

    pub fn exclude(text: &str, box_threshold: f64, text_threshold: f64) -> Self {
        Self {
            role: PromptRole::Exclude,
            ..Self::keep(text, box_threshold, text_threshold)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Fit a masked PCA with this many components.
    pub pca_components: Option<usize>,
    /// Run minimum wavelength mapping; features shallower than this are dropped.
    pub mwm_depth_threshold: Option<f64>,
}

/// Optional input locations; relative paths resolve against the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub cube: Option<PathBuf>,
    pub proposals: Option<PathBuf>,
    pub truth: Option<PathBuf>,
    /// Plain-text band centres (nm) for cubes whose header lacks them.
    pub wavelengths: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub points_per_side: u32,
    pub points_per_batch: u32,
    pub pred_iou_thresh: f64,
    pub crop_n_points_downscale_factor: u32,
    pub prompts: Vec<Prompt>,
    /// Per-side slack in pixels when comparing segment and detection boxes.
    pub margin_c: u32,
    pub band_triple: BandTriple,
    #[serde(default)]
    pub stretch: Stretch,
    /// Value written into masked-out cells of the exported cube.
    #[serde(default = "nan", with = "fill_serde")]
    pub no_data_fill: f64,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub inputs: InputPaths,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<PathBuf>,
}

fn nan() -> f64 {
    f64::NAN
}

/// JSON has no NaN, so the fill is a number or the string `"NaN"` (null also reads as NaN).
mod fill_serde {
    use super::*;

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
        Null(()),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_nan() {
            s.serialize_str("NaN")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Null(()) => Ok(f64::NAN),
            Repr::Text(t) if t.eq_ignore_ascii_case("nan") => Ok(f64::NAN),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid fill `{t}`"))),
        }
    }
}

/// The three published application settings for the segmenter, detector and margin.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ShreddedPlastics,
    DrillCoreScan,
    LitterMonitoring,
}

impl PipelineConfig {
    /// Built-in settings for one of the application presets. Band choice is always
    /// the caller's.
    pub fn preset(preset: Preset, band_triple: BandTriple) -> Self {
        let (pps, iou, crop, prompt, c) = match preset {
            Preset::ShreddedPlastics => (256, 0.7, 2, Prompt::keep("shredded piles of plastics", 0.4, 0.4), 15),
            Preset::DrillCoreScan => (128, 0.7, 1, Prompt::keep("cores", 0.5, 0.4), 5),
            Preset::LitterMonitoring => (128, 0.8, 1, Prompt::keep("object", 0.1, 0.1), 5),
        };
        Self {
            points_per_side: pps,
            points_per_batch: 128,
            pred_iou_thresh: iou,
            crop_n_points_downscale_factor: crop,
            prompts: vec![prompt],
            margin_c: c,
            band_triple,
            stretch: Stretch::default(),
            no_data_fill: f64::NAN,
            analysis: AnalysisConfig::default(),
            inputs: InputPaths::default(),
            sidecar: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.prompts.is_empty() {
            return Err(ConfigError::NoPrompts);
        }
        if self.points_per_side == 0 {
            return Err(ConfigError::NotPositive("points_per_side"));
        }
        if self.points_per_batch == 0 {
            return Err(ConfigError::NotPositive("points_per_batch"));
        }
        if self.crop_n_points_downscale_factor == 0 {
            return Err(ConfigError::NotPositive("crop_n_points_downscale_factor"));
        }
        if self.analysis.pca_components == Some(0) {
            return Err(ConfigError::NotPositive("analysis.pca_components"));
        }
        unit("pred_iou_thresh", self.pred_iou_thresh)?;
        if let Some(t) = self.analysis.mwm_depth_threshold {
            unit("analysis.mwm_depth_threshold", t)?;
        }
        for (i, p) in self.prompts.iter().enumerate() {
            if p.text.trim().is_empty() {
                return Err(ConfigError::EmptyPrompt(i));
            }
            unit(&format!("prompts[{i}].box_threshold"), p.box_threshold)?;
            unit(&format!("prompts[{i}].text_threshold"), p.text_threshold)?;
        }
        self.stretch
            .validate()
            .map_err(|_| ConfigError::Stretch(self.stretch.p_low, self.stretch.p_high))?;
        Ok(())
    }

    pub fn keep_prompts(&self) -> impl Iterator<Item = &Prompt> {
        self.prompts.iter().filter(|p| p.role == PromptRole::Keep)
    }

    pub fn exclude_prompts(&self) -> impl Iterator<Item = &Prompt> {
        self.prompts.iter().filter(|p| p.role == PromptRole::Exclude)
    }

    pub fn prompt(&self, text: &str) -> Option<&Prompt> {
        self.prompts.iter().find(|p| p.text == text)
    }
}

fn unit(field: &str, value: f64) -> Result<(), ConfigError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(ConfigError::OutOfUnitRange {
            field: field.to_string(),
            value,
        })
    }
}
