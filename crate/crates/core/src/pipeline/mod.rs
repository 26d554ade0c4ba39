//! File-level stages and the end-to-end driver.
//!
//! Every stage writes its artifacts into one output directory and records
//! them in `manifest.json`. Artifact names are fixed so identical inputs give
//! an identical directory.

mod error;
pub mod io;
pub mod manifest;
pub mod sidecar;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use error::{ErrorKind, PipelineError, Stage, StageFailure};
pub use manifest::{RunManifest, Workspace};

use crate::analysis::{masked_pca, mwm_map, project, MwmError, MwmMap, PcaModel};
use crate::composite::{compose, BandTriple, CompositeImage, Stretch};
use crate::config::PipelineConfig;
use crate::cube::HyperCube;
use crate::envi::{write_cube, DataType, Interleave, WriteOptions};
use crate::filtering::{compose_final_mask, FilterReport};
use crate::mask::BinaryMask;
use crate::maskproj::{apply_mask, DimensionMismatch, MaskStats, MaskedCube};
use crate::metrics::{evaluate, micro_average, EvalMetrics};
use crate::proposals::{ProposalsFile, SchemaMode};
use manifest::StageWriter;

pub const COMPOSITE_PNG: &str = "composite.png";
pub const SIDECAR_CONFIG: &str = "sidecar_config.json";
pub const PROPOSALS_JSON: &str = "proposals.json";
pub const FINAL_MASK: &str = "final_mask.rle.json";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const MASKED_CUBE: &str = "masked_cube";
pub const MASK_STATS: &str = "mask_stats.json";
pub const PCA_MODEL: &str = "pca_model.json";
pub const PCA_SCORES: &str = "pca_scores";
pub const MWM_MAP: &str = "mwm";
pub const EVAL_JSON: &str = "eval.json";

/// Writes `<stem>.hdr` and `<stem>.img`.
fn write_envi_pair(
    w: &mut StageWriter<'_>,
    stem: &str,
    cube: &HyperCube,
    opts: &WriteOptions,
) -> Result<(), StageFailure> {
    let (header, payload) = write_cube(cube, opts)?;
    w.write(&format!("{stem}.hdr"), header.as_bytes())?;
    w.write(&format!("{stem}.img"), &payload)?;
    Ok(())
}

/// float32 when every value survives the narrowing, float64 otherwise.
fn float_options(cube: &HyperCube) -> WriteOptions {
    let exact = cube.data().iter().all(|&v| v.is_nan() || v as f32 as f64 == v);
    WriteOptions::new(Interleave::Bsq, if exact { DataType::F32 } else { DataType::F64 })
}

pub fn stage_composite(
    ws: &mut Workspace,
    cube: &HyperCube,
    triple: BandTriple,
    stretch: Stretch,
) -> Result<CompositeImage, PipelineError> {
    ws.run(Stage::Composite, |w| {
        let image = compose(cube, triple, stretch)?;
        w.write(COMPOSITE_PNG, &image.to_png()?)?;
        Ok(image)
    })
}

pub fn stage_filter(
    ws: &mut Workspace,
    proposals: &ProposalsFile,
    config: &PipelineConfig,
) -> Result<(BinaryMask, FilterReport), PipelineError> {
    ws.run(Stage::Filter, |w| {
        let (mask, report) = compose_final_mask(proposals, config)?;
        w.write_json(FINAL_MASK, &mask)?;
        w.write_json(FILTER_REPORT, &report)?;
        Ok((mask, report))
    })
}

/// Exports the masked cube with `fill` in every masked-out cell.
pub fn stage_apply_mask<'a>(
    ws: &mut Workspace,
    cube: &'a HyperCube,
    mask: &'a BinaryMask,
    fill: f64,
) -> Result<MaskedCube<'a>, PipelineError> {
    ws.run(Stage::ApplyMask, |w| {
        let masked = apply_mask(cube, mask, fill)?;
        let filled = masked.filled_cube();
        write_envi_pair(w, MASKED_CUBE, &filled, &float_options(&filled))?;
        Ok(masked)
    })
}

/// Vector counts for a mask over a `samples × lines` raster.
pub fn stage_stats(ws: &mut Workspace, dims: (usize, usize), mask: &BinaryMask) -> Result<MaskStats, PipelineError> {
    ws.run(Stage::Stats, |w| {
        if mask.dims() != dims {
            return Err(DimensionMismatch {
                mask: mask.dims(),
                cube: dims,
            }
            .into());
        }
        let stats = MaskStats::from_mask(mask);
        w.write_json(MASK_STATS, &stats)?;
        Ok(stats)
    })
}

/// Fits the model and writes it plus a score raster (NaN outside the mask).
pub fn stage_pca(ws: &mut Workspace, masked: &MaskedCube<'_>, components: usize) -> Result<PcaModel, PipelineError> {
    ws.run(Stage::Pca, |w| {
        let model = masked_pca(masked, components)?;
        if model.degenerate_covariance {
            log::warn!("masked covariance is degenerate; trailing components are arbitrary");
        }
        let scores = project(&model, masked)?;
        let cube = masked.cube();
        let (samples, lines) = (cube.samples(), cube.lines());
        let mut raster = vec![f64::NAN; components * samples * lines];
        for ((l, s), score) in masked.coords().iter().zip(&scores) {
            for (k, v) in score.iter().enumerate() {
                raster[(k * lines + l) * samples + s] = *v;
            }
        }
        let raster = HyperCube::new_allow_nan(samples, lines, components, None, raster)?;
        w.write_json(PCA_MODEL, &model)?;
        write_envi_pair(
            w,
            PCA_SCORES,
            &raster,
            &WriteOptions::new(Interleave::Bsq, DataType::F64),
        )?;
        Ok(model)
    })
}

/// Two-band float64 raster: feature wavelength (nm) and depth, NaN where none.
pub fn stage_mwm(ws: &mut Workspace, masked: &MaskedCube<'_>, depth_threshold: f64) -> Result<MwmMap, PipelineError> {
    ws.run(Stage::Mwm, |w| {
        let map = mwm_map(masked, depth_threshold)?;
        log::info!(
            "{} of {} masked pixels have a feature",
            map.feature_count(),
            masked.len()
        );
        write_envi_pair(
            w,
            MWM_MAP,
            &map.to_cube(),
            &WriteOptions::new(Interleave::Bsq, DataType::F64),
        )?;
        Ok(map)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEval {
    pub name: String,
    #[serde(flatten)]
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenes: Vec<SceneEval>,
    pub micro_average: EvalMetrics,
}

/// Evaluates `(name, prediction, truth)` triples.
pub fn stage_eval(ws: &mut Workspace, pairs: &[(String, BinaryMask, BinaryMask)]) -> Result<EvalReport, PipelineError> {
    ws.run(Stage::Eval, |w| {
        let mut scenes = Vec::with_capacity(pairs.len());
        for (name, pred, truth) in pairs {
            scenes.push(SceneEval {
                name: name.clone(),
                metrics: evaluate(pred, truth)?,
            });
        }
        let report = EvalReport {
            micro_average: micro_average(scenes.iter().map(|s| &s.metrics)),
            scenes,
        };
        w.write_json(EVAL_JSON, &report)?;
        Ok(report)
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PipelineOptions {
    pub schema: SchemaMode,
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub report: FilterReport,
    pub stats: MaskStats,
    pub pca: Option<PcaModel>,
    pub mwm_features: Option<usize>,
    pub eval: Option<EvalReport>,
    pub manifest: RunManifest,
}

enum ProposalSource {
    File(PathBuf),
    Sidecar(PathBuf),
}

/// Up-front checks that need no file contents.
fn preflight(config: &PipelineConfig) -> Result<(PathBuf, ProposalSource), StageFailure> {
    config.validate()?;
    let cube = config
        .inputs
        .cube
        .clone()
        .ok_or_else(|| StageFailure::domain("no cube given (set inputs.cube or pass --cube)"))?;
    let source = match (
        &config.inputs.proposals,
        sidecar::resolve_sidecar(config.sidecar.as_deref()),
    ) {
        (Some(p), _) => ProposalSource::File(p.clone()),
        (None, Some(exe)) => ProposalSource::Sidecar(exe),
        (None, None) => return Err(sidecar::SidecarError::NotConfigured.into()),
    };
    Ok((cube, source))
}

/// composite → (sidecar) → filter → apply-mask → stats → optional pca, mwm and eval.
pub fn run_pipeline(
    config: &PipelineConfig,
    out_dir: &Path,
    opts: PipelineOptions,
) -> Result<PipelineSummary, PipelineError> {
    let (cube_path, source) = preflight(config).map_err(|e| PipelineError::new(Stage::Config, e))?;
    let mut ws = Workspace::create(out_dir, Some(config.clone()))?;

    let cube = ws.run(Stage::Load, |_| {
        io::load_cube(&cube_path, config.inputs.wavelengths.as_deref())
    })?;
    ws.record_input("cube", &cube_path)?;
    let payload = crate::envi::locate_payload(&cube_path).map_err(|e| PipelineError::new(Stage::Load, e))?;
    ws.record_input("cube_payload", &payload)?;
    if let Some(p) = &config.inputs.wavelengths {
        ws.record_input("wavelengths", p)?;
    }
    if config.analysis.mwm_depth_threshold.is_some() && cube.wavelengths().is_none() {
        return Err(PipelineError::new(
            Stage::Config,
            StageFailure::from(MwmError::MissingWavelengths),
        ));
    }
    config
        .band_triple
        .validate(cube.bands())
        .map_err(|e| PipelineError::new(Stage::Composite, e))?;

    stage_composite(&mut ws, &cube, config.band_triple, config.stretch)?;

    let proposals = match source {
        ProposalSource::File(path) => {
            ws.record_input("proposals", &path)?;
            let file = io::read_proposals(&path, opts.schema).map_err(|e| PipelineError::new(Stage::Filter, e))?;
            for m in file.echo_mismatches(config) {
                log::warn!("proposals config_echo differs from config: {m}");
            }
            file
        }
        ProposalSource::Sidecar(exe) => ws.run(Stage::Sidecar, |w| {
            let cfg = w.write_json(SIDECAR_CONFIG, config)?;
            let image = w.out_dir().join(COMPOSITE_PNG);
            let out = w.out_dir().join(PROPOSALS_JSON);
            sidecar::run_sidecar(&exe, &image, &cfg, &out)?;
            w.adopt(PROPOSALS_JSON)?;
            let file = io::read_proposals(&out, opts.schema)
                .map_err(|e| StageFailure::new(ErrorKind::Sidecar, format!("invalid proposals: {}", e.source)))?;
            let mismatches = file.echo_mismatches(config);
            if !mismatches.is_empty() {
                return Err(sidecar::SidecarError::ConfigEcho(mismatches.join("; ")).into());
            }
            Ok(file)
        })?,
    };
    if (proposals.image.width, proposals.image.height) != (cube.samples(), cube.lines()) {
        return Err(PipelineError::new(
            Stage::Filter,
            StageFailure::format(format!(
                "proposals are for a {}x{} image but the cube is {}x{}",
                proposals.image.width,
                proposals.image.height,
                cube.samples(),
                cube.lines()
            )),
        ));
    }

    let (mask, report) = stage_filter(&mut ws, &proposals, config)?;
    let masked = stage_apply_mask(&mut ws, &cube, &mask, config.no_data_fill)?;
    let stats = stage_stats(&mut ws, (cube.samples(), cube.lines()), &mask)?;
    let pca = match config.analysis.pca_components {
        Some(n) => Some(stage_pca(&mut ws, &masked, n)?),
        None => None,
    };
    let mwm_features = match config.analysis.mwm_depth_threshold {
        Some(t) => Some(stage_mwm(&mut ws, &masked, t)?.feature_count()),
        None => None,
    };
    let eval = match &config.inputs.truth {
        Some(path) => {
            ws.record_input("truth", path)?;
            let truth = io::read_mask(path).map_err(|e| PipelineError::new(Stage::Eval, e))?;
            Some(stage_eval(&mut ws, &[("scene".to_string(), mask.clone(), truth)])?)
        }
        None => None,
    };
    let manifest = ws.finish()?;
    Ok(PipelineSummary {
        report,
        stats,
        pca,
        mwm_features,
        eval,
        manifest,
    })
}
