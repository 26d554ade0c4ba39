//! Intersection and exclusion filtering of segment proposals against
//! zero-shot detections, and composition of the final region-of-interest mask.
//!
//! A proposal matches a detection when the proposal's box lies inside the
//! detection box grown by `margin_c` pixels on every side. Keep-prompt matches
//! select proposals; exclude-prompt matches remove their pixels from the
//! working mask afterwards, so exclusion wins over keeping.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bbox::BBox;
use crate::config::{PipelineConfig, PromptRole};
use crate::mask::{BinaryMask, MaskError};
use crate::proposals::{Detection, ProposalsFile, SegmentProposal};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("raster mismatch: {0}")]
    RasterMismatch(String),
    #[error("detection {index} refers to prompt `{prompt}`, which is not in the config")]
    UnknownPrompt { index: usize, prompt: String },
    #[error("config needs at least one prompt")]
    NoPrompts,
    #[error(transparent)]
    Mask(#[from] MaskError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MatchRule {
    pub margin_c: u32,
}

impl MatchRule {
    pub fn new(margin_c: u32) -> Self {
        Self { margin_c }
    }
}

/// True iff `sam` lies inside `dino` expanded by the margin on every side
/// (closed comparisons).
pub fn boxes_match(sam: &BBox, dino: &BBox, rule: MatchRule) -> bool {
    let c = i64::from(rule.margin_c);
    let (sx0, sy0, sx1, sy1) = (sam.x0 as i64, sam.y0 as i64, sam.x1 as i64, sam.y1 as i64);
    let (dx0, dy0, dx1, dy1) = (dino.x0 as i64, dino.y0 as i64, dino.x1 as i64, dino.y1 as i64);
    sx0 >= dx0 - c && sy0 >= dy0 - c && sx1 <= dx1 + c && sy1 <= dy1 + c
}

/// The detection credited for keeping or excluding a proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub proposal_id: u64,
    pub detection_index: usize,
    pub phrase: String,
    pub prompt: String,
    pub role: PromptRole,
    pub confidence: f64,
}

/// Outcome of filtering. `kept_ids`, `excluded_ids` and `unmatched_ids`
/// partition the proposals that passed the predicted-IoU gate; proposals
/// below it are listed in `below_iou_thresh` only.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept_ids: Vec<u64>,
    pub excluded_ids: Vec<u64>,
    pub unmatched_ids: Vec<u64>,
    pub below_iou_thresh: Vec<u64>,
    pub matches: Vec<MatchRecord>,
}

impl FilterReport {
    /// Checks that the three id sets are disjoint and cover `ids` exactly.
    pub fn is_partition_of(&self, ids: &[u64]) -> bool {
        let mut seen = BTreeSet::new();
        let all = self
            .kept_ids
            .iter()
            .chain(&self.excluded_ids)
            .chain(&self.unmatched_ids);
        for id in all {
            if !seen.insert(*id) {
                return false;
            }
        }
        seen == ids.iter().copied().collect()
    }

    pub fn match_for(&self, id: u64) -> Option<&MatchRecord> {
        self.matches.iter().find(|m| m.proposal_id == id)
    }
}

/// Detection plus its position in the caller's detection list.
type Indexed<'a> = (usize, &'a Detection);

/// Orders candidates by descending confidence; ties keep list order.
fn by_confidence<'a>(detections: impl IntoIterator<Item = Indexed<'a>>) -> Vec<Indexed<'a>> {
    let mut v: Vec<_> = detections.into_iter().collect();
    v.sort_by(|a, b| b.1.confidence.total_cmp(&a.1.confidence));
    v
}

fn first_match<'a>(p: &SegmentProposal, ranked: &[Indexed<'a>], rule: MatchRule) -> Option<Indexed<'a>> {
    ranked
        .iter()
        .copied()
        .find(|(_, d)| boxes_match(&p.bbox, &d.bbox, rule))
}

fn record(p: &SegmentProposal, (index, d): Indexed<'_>, role: PromptRole) -> MatchRecord {
    MatchRecord {
        proposal_id: p.id,
        detection_index: index,
        phrase: d.phrase.clone(),
        prompt: d.prompt.clone(),
        role,
        confidence: d.confidence,
    }
}

/// Common raster of the proposals and detections; `None` when there are no proposals.
fn check_raster(
    proposals: &[SegmentProposal],
    detections: &[Indexed<'_>],
    dims: Option<(usize, usize)>,
) -> Result<Option<(usize, usize)>, FilterError> {
    let dims = dims.or_else(|| proposals.first().map(|p| p.mask.dims()));
    let Some((w, h)) = dims else {
        return Ok(None);
    };
    if let Some(p) = proposals.iter().find(|p| p.mask.dims() != (w, h)) {
        return Err(FilterError::RasterMismatch(format!(
            "proposal {} is {:?}, expected {:?}",
            p.id,
            p.mask.dims(),
            (w, h)
        )));
    }
    if let Some((i, _)) = detections.iter().find(|(_, d)| d.bbox.validate(w, h).is_err()) {
        return Err(FilterError::RasterMismatch(format!(
            "detection {i} box lies outside the {w}x{h} raster"
        )));
    }
    Ok(Some((w, h)))
}

fn keep_pass<'p>(
    proposals: &'p [SegmentProposal],
    keep: &[Indexed<'_>],
    rule: MatchRule,
) -> (Vec<&'p SegmentProposal>, Vec<MatchRecord>) {
    let ranked = by_confidence(keep.iter().copied());
    let mut kept = Vec::new();
    let mut records = Vec::new();
    for p in proposals {
        if let Some(m) = first_match(p, &ranked, rule) {
            kept.push(p);
            records.push(record(p, m, PromptRole::Keep));
        }
    }
    (kept, records)
}

/// Keeps every proposal whose box matches at least one keep detection.
pub fn intersection_filter<'p>(
    proposals: &'p [SegmentProposal],
    keep_detections: &[Detection],
    rule: MatchRule,
) -> Result<(Vec<&'p SegmentProposal>, FilterReport), FilterError> {
    let indexed: Vec<Indexed> = keep_detections.iter().enumerate().collect();
    check_raster(proposals, &indexed, None)?;
    let (kept, matches) = keep_pass(proposals, &indexed, rule);
    let kept_ids: Vec<u64> = kept.iter().map(|p| p.id).collect();
    let report = FilterReport {
        unmatched_ids: proposals
            .iter()
            .map(|p| p.id)
            .filter(|id| !kept_ids.contains(id))
            .collect(),
        kept_ids,
        matches,
        ..FilterReport::default()
    };
    Ok((kept, report))
}

fn exclude_pass(
    current: &BinaryMask,
    proposals: &[SegmentProposal],
    exclude: &[Indexed<'_>],
    rule: MatchRule,
) -> Result<(BinaryMask, Vec<MatchRecord>), FilterError> {
    let ranked = by_confidence(exclude.iter().copied());
    let mut removed: Option<BinaryMask> = None;
    let mut records = Vec::new();
    for p in proposals {
        if let Some(m) = first_match(p, &ranked, rule) {
            removed = Some(match removed {
                None => p.mask.clone(),
                Some(acc) => acc.union(&p.mask)?,
            });
            records.push(record(p, m, PromptRole::Exclude));
        }
    }
    let result = match removed {
        Some(e) => current.difference(&e)?,
        None => current.clone(),
    };
    Ok((result, records))
}

/// Removes from `current_mask` the pixels of every proposal matching an
/// exclude detection. Equivalent to XOR when those pixels lie inside the mask.
pub fn exclusion_filter(
    current_mask: &BinaryMask,
    proposals: &[SegmentProposal],
    exclude_detections: &[Detection],
    rule: MatchRule,
) -> Result<(BinaryMask, FilterReport), FilterError> {
    let indexed: Vec<Indexed> = exclude_detections.iter().enumerate().collect();
    check_raster(proposals, &indexed, Some(current_mask.dims()))?;
    let (mask, matches) = exclude_pass(current_mask, proposals, &indexed, rule)?;
    let excluded_ids: Vec<u64> = matches.iter().map(|m| m.proposal_id).collect();
    let report = FilterReport {
        unmatched_ids: proposals
            .iter()
            .map(|p| p.id)
            .filter(|id| !excluded_ids.contains(id))
            .collect(),
        excluded_ids,
        matches,
        ..FilterReport::default()
    };
    Ok((mask, report))
}

/// Builds the final region-of-interest mask for a proposals file.
///
/// Proposals below `pred_iou_thresh` and detections below their prompt's box
/// threshold are ignored. Keep prompts select proposals (all proposals when
/// the config has no keep prompt); exclude prompts are then applied in config
/// order.
pub fn compose_final_mask(
    file: &ProposalsFile,
    config: &PipelineConfig,
) -> Result<(BinaryMask, FilterReport), FilterError> {
    if config.prompts.is_empty() {
        return Err(FilterError::NoPrompts);
    }
    let (width, height) = (file.image.width, file.image.height);
    let rule = MatchRule::new(config.margin_c);

    let mut detections: Vec<(usize, &Detection, PromptRole, usize)> = Vec::new();
    for (i, d) in file.detections.iter().enumerate() {
        let Some(prompt_idx) = config.prompts.iter().position(|p| p.text == d.prompt) else {
            return Err(FilterError::UnknownPrompt {
                index: i,
                prompt: d.prompt.clone(),
            });
        };
        let prompt = &config.prompts[prompt_idx];
        if d.confidence >= prompt.box_threshold {
            detections.push((i, d, prompt.role, prompt_idx));
        }
    }
    let all: Vec<Indexed> = detections.iter().map(|&(i, d, _, _)| (i, d)).collect();

    let (active, below): (Vec<&SegmentProposal>, Vec<&SegmentProposal>) = file
        .proposals
        .iter()
        .partition(|p| p.predicted_iou >= config.pred_iou_thresh);
    let active: Vec<SegmentProposal> = active.into_iter().cloned().collect();
    check_raster(&active, &all, Some((width, height)))?;

    let empty = BinaryMask::empty(width, height)?;
    let mut matches = Vec::new();
    let candidates: Vec<&SegmentProposal> = if config.keep_prompts().next().is_some() {
        let keep: Vec<Indexed> = detections
            .iter()
            .filter(|(.., role, _)| *role == PromptRole::Keep)
            .map(|&(i, d, _, _)| (i, d))
            .collect();
        let (kept, records) = keep_pass(&active, &keep, rule);
        matches.extend(records);
        kept
    } else {
        active.iter().collect()
    };
    let mut mask = BinaryMask::union_all(candidates.iter().map(|p| &p.mask))?.unwrap_or(empty);

    let mut excluded = BTreeSet::new();
    for (prompt_idx, prompt) in config.prompts.iter().enumerate() {
        if prompt.role != PromptRole::Exclude {
            continue;
        }
        let exclude: Vec<Indexed> = detections
            .iter()
            .filter(|&&(.., idx)| idx == prompt_idx)
            .map(|&(i, d, _, _)| (i, d))
            .collect();
        let (next, records) = exclude_pass(&mask, &active, &exclude, rule)?;
        mask = next;
        for r in records {
            if excluded.insert(r.proposal_id) {
                matches.retain(|m: &MatchRecord| m.proposal_id != r.proposal_id);
                matches.push(r);
            }
        }
    }

    let kept_ids: Vec<u64> = candidates
        .iter()
        .map(|p| p.id)
        .filter(|id| !excluded.contains(id))
        .collect();
    let excluded_ids: Vec<u64> = active.iter().map(|p| p.id).filter(|id| excluded.contains(id)).collect();
    let unmatched_ids = active
        .iter()
        .map(|p| p.id)
        .filter(|id| !kept_ids.contains(id) && !excluded.contains(id))
        .collect();
    matches.sort_by_key(|m| m.proposal_id);
    let report = FilterReport {
        kept_ids,
        excluded_ids,
        unmatched_ids,
        below_iou_thresh: below.iter().map(|p| p.id).collect(),
        matches,
    };
    Ok((mask, report))
}
