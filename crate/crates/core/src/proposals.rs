//! Interchange schema for segment proposals and zero-shot detections.
//!
//! ```json
//! {
//!   "image": {"width": 64, "height": 48},
//!   "proposals": [{"id": 1, "mask": {"width": 64, "height": 48, "rle": [...]},
//!                  "bbox": {"x0": 3, "y0": 4, "x1": 9, "y1": 12},
//!                  "predicted_iou": 0.93, "stability_score": 0.97}],
//!   "detections": [{"bbox": {...}, "phrase": "cores", "confidence": 0.61,
//!                   "prompt": "cores", "box_threshold": 0.5}],
//!   "config_echo": {...}
//! }
//! ```
//!
//! `prompt` names the configured prompt a detection was produced for, which is
//! how detections are routed to the keep or exclude role.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::bbox::BBox;
use crate::config::PipelineConfig;
use crate::mask::BinaryMask;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown field `{field}` at {path}")]
    UnknownField { path: String, field: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

fn invalid(path: impl Into<String>, reason: impl Into<String>) -> SchemaError {
    SchemaError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentProposal {
    pub id: u64,
    pub mask: BinaryMask,
    pub bbox: BBox,
    pub predicted_iou: f64,
    pub stability_score: f64,
}

impl SegmentProposal {
    /// Builds a proposal whose box is the tight box of `mask`. Panics on an empty mask.
    pub fn from_mask(id: u64, mask: BinaryMask, predicted_iou: f64, stability_score: f64) -> Self {
        let bbox = mask.tight_bbox().expect("proposal mask has on-pixels");
        Self {
            id,
            mask,
            bbox,
            predicted_iou,
            stability_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BBox,
    pub phrase: String,
    pub confidence: f64,
    /// Text of the configured prompt that produced this detection.
    pub prompt: String,
    /// Box threshold the detector applied, when recorded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsFile {
    pub image: ImageInfo,
    pub proposals: Vec<SegmentProposal>,
    pub detections: Vec<Detection>,
    #[serde(default)]
    pub config_echo: Map<String, Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SchemaMode {
    /// Unknown fields are errors.
    Strict,
    /// Unknown fields are ignored.
    #[default]
    Lenient,
}

const TOP_FIELDS: &[&str] = &["image", "proposals", "detections", "config_echo"];
const IMAGE_FIELDS: &[&str] = &["width", "height"];
const PROPOSAL_FIELDS: &[&str] = &["id", "mask", "bbox", "predicted_iou", "stability_score"];
const MASK_FIELDS: &[&str] = &["width", "height", "rle"];
const BBOX_FIELDS: &[&str] = &["x0", "y0", "x1", "y1"];
const DETECTION_FIELDS: &[&str] = &["bbox", "phrase", "confidence", "prompt", "box_threshold"];

fn check_fields(value: &Value, allowed: &[&str], path: &str) -> Result<(), SchemaError> {
    if let Value::Object(map) = value {
        if let Some(field) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(SchemaError::UnknownField {
                path: path.to_string(),
                field: field.clone(),
            });
        }
    }
    Ok(())
}

fn check_array(
    value: &Value,
    key: &str,
    each: impl Fn(&Value, &str) -> Result<(), SchemaError>,
) -> Result<(), SchemaError> {
    if let Some(Value::Array(items)) = value.get(key) {
        for (i, item) in items.iter().enumerate() {
            each(item, &format!("{key}[{i}]"))?;
        }
    }
    Ok(())
}

fn reject_unknown_fields(doc: &Value) -> Result<(), SchemaError> {
    check_fields(doc, TOP_FIELDS, "$")?;
    if let Some(image) = doc.get("image") {
        check_fields(image, IMAGE_FIELDS, "image")?;
    }
    check_array(doc, "proposals", |p, path| {
        check_fields(p, PROPOSAL_FIELDS, path)?;
        if let Some(m) = p.get("mask") {
            check_fields(m, MASK_FIELDS, &format!("{path}.mask"))?;
        }
        if let Some(b) = p.get("bbox") {
            check_fields(b, BBOX_FIELDS, &format!("{path}.bbox"))?;
        }
        Ok(())
    })?;
    check_array(doc, "detections", |d, path| {
        check_fields(d, DETECTION_FIELDS, path)?;
        if let Some(b) = d.get("bbox") {
            check_fields(b, BBOX_FIELDS, &format!("{path}.bbox"))?;
        }
        Ok(())
    })
}

fn unit_score(path: String, value: f64) -> Result<(), SchemaError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(invalid(path, format!("score {value} outside [0, 1]")))
    }
}

impl ProposalsFile {
    /// Parses and validates a `proposals.json` document.
    pub fn parse(text: &str, mode: SchemaMode) -> Result<Self, SchemaError> {
        let doc: Value = serde_json::from_str(text)?;
        if mode == SchemaMode::Strict {
            reject_unknown_fields(&doc)?;
        }
        let file: ProposalsFile = serde_json::from_value(doc)?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("proposals serialize")
    }

    /// Checks every invariant that is not expressed by the JSON shape itself.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let ImageInfo { width, height } = self.image;
        if width == 0 || height == 0 {
            return Err(invalid("image", "dimensions must be positive"));
        }
        let mut ids = HashSet::new();
        for (i, p) in self.proposals.iter().enumerate() {
            let path = format!("proposals[{i}]");
            if !ids.insert(p.id) {
                return Err(invalid(path, format!("duplicate id {}", p.id)));
            }
            if p.mask.dims() != (width, height) {
                return Err(invalid(
                    path,
                    format!("mask is {:?}, image is {:?}", p.mask.dims(), (width, height)),
                ));
            }
            p.bbox
                .validate(width, height)
                .map_err(|e| invalid(format!("{path}.bbox"), e.to_string()))?;
            match p.mask.tight_bbox() {
                None => return Err(invalid(path, "mask has no on-pixels")),
                Some(tight) if tight != p.bbox => {
                    return Err(invalid(
                        format!("{path}.bbox"),
                        format!("declared {:?} differs from the mask's tight box {:?}", p.bbox, tight),
                    ))
                }
                Some(_) => {}
            }
            unit_score(format!("{path}.predicted_iou"), p.predicted_iou)?;
            unit_score(format!("{path}.stability_score"), p.stability_score)?;
        }
        for (i, d) in self.detections.iter().enumerate() {
            let path = format!("detections[{i}]");
            d.bbox
                .validate(width, height)
                .map_err(|e| invalid(format!("{path}.bbox"), e.to_string()))?;
            unit_score(format!("{path}.confidence"), d.confidence)?;
            if d.prompt.trim().is_empty() {
                return Err(invalid(format!("{path}.prompt"), "empty prompt"));
            }
            if let Some(t) = d.box_threshold {
                unit_score(format!("{path}.box_threshold"), t)?;
                if d.confidence < t {
                    return Err(invalid(
                        format!("{path}.confidence"),
                        format!("confidence {} below the recorded box threshold {t}", d.confidence),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Names of shared config fields whose echoed value differs from `config`.
    /// Fields missing from the echo are not reported.
    pub fn echo_mismatches(&self, config: &PipelineConfig) -> Vec<String> {
        let ours = match serde_json::to_value(config) {
            Ok(Value::Object(map)) => map,
            _ => return Vec::new(),
        };
        const SHARED: [&str; 5] = [
            "points_per_side",
            "points_per_batch",
            "pred_iou_thresh",
            "crop_n_points_downscale_factor",
            "prompts",
        ];
        SHARED
            .iter()
            .filter(|k| match (self.config_echo.get(**k), ours.get(**k)) {
                (Some(echo), Some(mine)) => echo != mine,
                _ => false,
            })
            .map(|k| k.to_string())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::BandTriple;
    use crate::config::{PipelineConfig, Preset};

    fn sample() -> ProposalsFile {
        let mask = BinaryMask::from_fn(8, 6, |x, y| (2..5).contains(&x) && (1..4).contains(&y)).unwrap();
        ProposalsFile {
            image: ImageInfo { width: 8, height: 6 },
            proposals: vec![SegmentProposal::from_mask(7, mask, 0.9, 0.95)],
            detections: vec![Detection {
                bbox: BBox::new(1, 0, 6, 5),
                phrase: "cores".into(),
                confidence: 0.6,
                prompt: "cores".into(),
                box_threshold: Some(0.5),
            }],
            config_echo: Map::new(),
        }
    }

    #[test]
    fn round_trip_strict() {
        let f = sample();
        let back = ProposalsFile::parse(&f.to_json(), SchemaMode::Strict).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.proposals[0].bbox, BBox::new(2, 1, 5, 4));
    }

    #[test]
    fn unknown_fields_only_fail_in_strict_mode() {
        let mut doc: Value = serde_json::from_str(&sample().to_json()).unwrap();
        doc["proposals"][0]["area"] = Value::from(9);
        let text = doc.to_string();
        let err = ProposalsFile::parse(&text, SchemaMode::Strict).unwrap_err();
        assert!(matches!(err, SchemaError::UnknownField { ref field, .. } if field == "area"));
        assert!(ProposalsFile::parse(&text, SchemaMode::Lenient).is_ok());

        let mut doc: Value = serde_json::from_str(&sample().to_json()).unwrap();
        doc["detections"][0]["bbox"]["w"] = Value::from(1);
        assert!(ProposalsFile::parse(&doc.to_string(), SchemaMode::Strict).is_err());
    }

    #[test]
    fn rejects_bbox_that_is_not_tight() {
        let mut f = sample();
        f.proposals[0].bbox = BBox::new(2, 1, 6, 4);
        let err = ProposalsFile::parse(&f.to_json(), SchemaMode::Lenient).unwrap_err();
        assert!(matches!(err, SchemaError::Invalid { ref path, .. } if path == "proposals[0].bbox"));
    }

    #[test]
    fn rejects_bad_scores_ids_and_dims() {
        let mut f = sample();
        f.proposals[0].predicted_iou = 1.2;
        assert!(f.validate().is_err());

        let mut f = sample();
        f.proposals.push(f.proposals[0].clone());
        assert!(f.validate().is_err());

        let mut f = sample();
        f.image.width = 9;
        assert!(f.validate().is_err());

        let mut f = sample();
        f.detections[0].confidence = 0.4;
        assert!(f.validate().is_err());
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            ProposalsFile::parse("{\"image\": ", SchemaMode::Lenient),
            Err(SchemaError::Json(_))
        ));
        assert!(matches!(
            ProposalsFile::parse("{\"image\": {\"width\": 2}}", SchemaMode::Lenient),
            Err(SchemaError::Json(_))
        ));
    }

    #[test]
    fn echo_comparison() {
        let config = PipelineConfig::preset(Preset::DrillCoreScan, BandTriple::new(0, 1, 2));
        let mut f = sample();
        f.config_echo.insert("points_per_side".into(), Value::from(128));
        f.config_echo.insert("pred_iou_thresh".into(), Value::from(0.7));
        f.config_echo.insert("sam_checkpoint".into(), Value::from("vit_h.pth"));
        assert!(f.echo_mismatches(&config).is_empty());
        f.config_echo.insert("points_per_batch".into(), Value::from(64));
        assert_eq!(f.echo_mismatches(&config), vec!["points_per_batch".to_string()]);
    }
}
