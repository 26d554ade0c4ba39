use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsmask_core::composite::{BandTriple, Stretch};
use hsmask_core::config::PipelineConfig;
use hsmask_core::envi::parse_header;
use hsmask_core::metrics::metrics_table;
use hsmask_core::pipeline::{self, io, run_pipeline, PipelineError, PipelineOptions, Stage, StageFailure, Workspace};
use hsmask_core::proposals::SchemaMode;

/// Hyperspectral region-of-interest masking.
#[derive(Parser)]
#[command(name = "hsmask", version, about)]
struct Cli {
    /// Log more (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Pipeline config JSON; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for artifacts and manifest.json.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CubeArgs {
    /// ENVI header of the input cube.
    #[arg(long)]
    cube: Option<PathBuf>,
    /// Text file of band centres in nm, replacing header wavelengths.
    #[arg(long)]
    wavelengths: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render a stretched false-colour PNG from three bands.
    Composite {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        /// Zero-based band indices as R,G,B.
        #[arg(long, value_parser = parse_bands)]
        bands: Option<BandTriple>,
        /// Lower and upper stretch percentiles as LO,HI.
        #[arg(long, value_parser = parse_stretch)]
        stretch: Option<Stretch>,
    },
    /// Combine proposals and detections into the final mask.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        proposals: Option<PathBuf>,
        /// Reject unknown fields in proposals.json.
        #[arg(long)]
        strict_schema: bool,
        /// Box-matching margin in pixels.
        #[arg(long)]
        margin_c: Option<u32>,
    },
    /// Export the cube with masked-out pixels replaced by the fill value.
    ApplyMask {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        /// Mask as RLE JSON or PNG.
        #[arg(long)]
        mask: PathBuf,
        /// Fill for masked-out cells (a number or NaN).
        #[arg(long)]
        fill: Option<f64>,
    },
    /// Report kept and total vector counts.
    Stats {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        #[arg(long)]
        mask: PathBuf,
    },
    /// Fit PCA on masked-in spectra only.
    Pca {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        components: Option<usize>,
    },
    /// Minimum wavelength mapping over masked-in pixels.
    Mwm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        #[arg(long)]
        mask: PathBuf,
        /// Drop features shallower than this.
        #[arg(long)]
        depth_threshold: Option<f64>,
    },
    /// Pixel-level precision, recall, F1 and IoU against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Predicted mask; repeat together with --truth for several scenes.
        #[arg(long, required = true)]
        mask: Vec<PathBuf>,
        #[arg(long, required = true)]
        truth: Vec<PathBuf>,
        /// Scene names for the table, in the same order.
        #[arg(long)]
        name: Vec<String>,
    },
    /// Run every stage from one config.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        cube: CubeArgs,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        strict_schema: bool,
    },
}

fn parse_list<const N: usize, T: std::str::FromStr>(s: &str) -> Result<[T; N], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{p}` is not a valid number")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated values"))
}

fn parse_bands(s: &str) -> Result<BandTriple, String> {
    let [r, g, b] = parse_list::<3, usize>(s)?;
    Ok(BandTriple::new(r, g, b))
}

fn parse_stretch(s: &str) -> Result<Stretch, String> {
    let [lo, hi] = parse_list::<2, f64>(s)?;
    Stretch::new(lo, hi).map_err(|e| e.to_string())
}

fn fail(stage: Stage, message: impl Into<String>) -> PipelineError {
    PipelineError::new(stage, StageFailure::domain(message))
}

fn load_config(common: &Common) -> Result<Option<PipelineConfig>, PipelineError> {
    common
        .config
        .as_deref()
        .map(|p| io::read_config(p).map_err(|e| PipelineError::new(Stage::Config, e)))
        .transpose()
}

fn require_config(common: &Common, stage: Stage) -> Result<PipelineConfig, PipelineError> {
    load_config(common)?.ok_or_else(|| fail(stage, "--config is required for this command"))
}

/// Resolves the cube and wavelength paths from flags, then config.
fn cube_paths(
    args: &CubeArgs,
    config: Option<&PipelineConfig>,
    stage: Stage,
) -> Result<(PathBuf, Option<PathBuf>), PipelineError> {
    let inputs = config.map(|c| &c.inputs);
    let cube = args
        .cube
        .clone()
        .or_else(|| inputs.and_then(|i| i.cube.clone()))
        .ok_or_else(|| fail(stage, "no cube given (pass --cube or set inputs.cube)"))?;
    let wl = args
        .wavelengths
        .clone()
        .or_else(|| inputs.and_then(|i| i.wavelengths.clone()));
    Ok((cube, wl))
}

fn load_cube(
    ws: &mut Workspace,
    args: &CubeArgs,
    config: Option<&PipelineConfig>,
    stage: Stage,
) -> Result<hsmask_core::HyperCube, PipelineError> {
    let (cube, wl) = cube_paths(args, config, stage)?;
    let loaded = io::load_cube(&cube, wl.as_deref()).map_err(|e| PipelineError::new(Stage::Load, e))?;
    ws.record_input("cube", &cube)?;
    if let Some(wl) = &wl {
        ws.record_input("wavelengths", wl)?;
    }
    Ok(loaded)
}

fn load_mask(ws: &mut Workspace, path: &Path, stage: Stage) -> Result<hsmask_core::BinaryMask, PipelineError> {
    let mask = io::read_mask(path).map_err(|e| PipelineError::new(stage, e))?;
    ws.record_input("mask", path)?;
    Ok(mask)
}

fn schema_mode(strict: bool) -> SchemaMode {
    if strict {
        SchemaMode::Strict
    } else {
        SchemaMode::Lenient
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Composite {
            common,
            cube,
            bands,
            stretch,
        } => {
            let config = load_config(&common)?;
            let triple = bands
                .or(config.as_ref().map(|c| c.band_triple))
                .ok_or_else(|| fail(Stage::Composite, "no bands given (pass --bands or use --config)"))?;
            let stretch = stretch.or(config.as_ref().map(|c| c.stretch)).unwrap_or_default();
            let mut ws = Workspace::create(&common.out_dir, config.clone())?;
            let data = load_cube(&mut ws, &cube, config.as_ref(), Stage::Composite)?;
            let image = pipeline::stage_composite(&mut ws, &data, triple, stretch)?;
            ws.finish()?;
            println!(
                "wrote {} ({}x{})",
                common.out_dir.join(pipeline::COMPOSITE_PNG).display(),
                image.width,
                image.height
            );
        }
        Command::Filter {
            common,
            proposals,
            strict_schema,
            margin_c,
        } => {
            let mut config = require_config(&common, Stage::Filter)?;
            if let Some(c) = margin_c {
                config.margin_c = c;
            }
            config.validate().map_err(|e| PipelineError::new(Stage::Config, e))?;
            let path = proposals.or(config.inputs.proposals.clone()).ok_or_else(|| {
                fail(
                    Stage::Filter,
                    "no proposals given (pass --proposals or set inputs.proposals)",
                )
            })?;
            let mut ws = Workspace::create(&common.out_dir, Some(config.clone()))?;
            let file = io::read_proposals(&path, schema_mode(strict_schema))
                .map_err(|e| PipelineError::new(Stage::Filter, e))?;
            ws.record_input("proposals", &path)?;
            let (mask, report) = pipeline::stage_filter(&mut ws, &file, &config)?;
            ws.finish()?;
            println!(
                "kept {} proposal(s), excluded {}, unmatched {}, below iou threshold {}; mask covers {} pixel(s)",
                report.kept_ids.len(),
                report.excluded_ids.len(),
                report.unmatched_ids.len(),
                report.below_iou_thresh.len(),
                mask.popcount()
            );
        }
        Command::ApplyMask {
            common,
            cube,
            mask,
            fill,
        } => {
            let config = load_config(&common)?;
            let fill = fill.or(config.as_ref().map(|c| c.no_data_fill)).unwrap_or(f64::NAN);
            let mut ws = Workspace::create(&common.out_dir, config.clone())?;
            let data = load_cube(&mut ws, &cube, config.as_ref(), Stage::ApplyMask)?;
            let mask = load_mask(&mut ws, &mask, Stage::ApplyMask)?;
            pipeline::stage_apply_mask(&mut ws, &data, &mask, fill)?;
            let stats = pipeline::stage_stats(&mut ws, (data.samples(), data.lines()), &mask)?;
            ws.finish()?;
            println!("kept {} of {} vectors", stats.kept_vectors, stats.total_vectors);
        }
        Command::Stats { common, cube, mask } => {
            let config = load_config(&common)?;
            let (cube_path, _) = cube_paths(&cube, config.as_ref(), Stage::Stats)?;
            let text = std::fs::read_to_string(&cube_path).map_err(|e| PipelineError::new(Stage::Load, e))?;
            let header = parse_header(&text).map_err(|e| PipelineError::new(Stage::Load, e))?;
            let mut ws = Workspace::create(&common.out_dir, config)?;
            ws.record_input("cube", &cube_path)?;
            let mask = load_mask(&mut ws, &mask, Stage::Stats)?;
            let stats = pipeline::stage_stats(&mut ws, (header.samples, header.lines), &mask)?;
            ws.finish()?;
            println!(
                "kept {} of {} vectors (reduction {:.4})",
                stats.kept_vectors, stats.total_vectors, stats.reduction_ratio
            );
        }
        Command::Pca {
            common,
            cube,
            mask,
            components,
        } => {
            let config = load_config(&common)?;
            let n = components
                .or(config.as_ref().and_then(|c| c.analysis.pca_components))
                .ok_or_else(|| fail(Stage::Pca, "no component count given (pass --components)"))?;
            let mut ws = Workspace::create(&common.out_dir, config.clone())?;
            let data = load_cube(&mut ws, &cube, config.as_ref(), Stage::Pca)?;
            let mask = load_mask(&mut ws, &mask, Stage::Pca)?;
            let masked = hsmask_core::maskproj::apply_mask(&data, &mask, f64::NAN)
                .map_err(|e| PipelineError::new(Stage::Pca, e))?;
            let model = pipeline::stage_pca(&mut ws, &masked, n)?;
            ws.finish()?;
            let explained: f64 = model.eigenvalues.iter().sum::<f64>() / model.total_variance;
            println!(
                "{} component(s) from {} vectors explain {:.4} of the variance{}",
                model.n_components(),
                model.n_vectors,
                explained,
                if model.degenerate_covariance {
                    " (degenerate covariance)"
                } else {
                    ""
                }
            );
        }
        Command::Mwm {
            common,
            cube,
            mask,
            depth_threshold,
        } => {
            let config = load_config(&common)?;
            let threshold = depth_threshold
                .or(config.as_ref().and_then(|c| c.analysis.mwm_depth_threshold))
                .unwrap_or(0.0);
            let mut ws = Workspace::create(&common.out_dir, config.clone())?;
            let data = load_cube(&mut ws, &cube, config.as_ref(), Stage::Mwm)?;
            let mask = load_mask(&mut ws, &mask, Stage::Mwm)?;
            let masked = hsmask_core::maskproj::apply_mask(&data, &mask, f64::NAN)
                .map_err(|e| PipelineError::new(Stage::Mwm, e))?;
            let map = pipeline::stage_mwm(&mut ws, &masked, threshold)?;
            ws.finish()?;
            println!(
                "{} of {} masked pixels have an absorption feature",
                map.feature_count(),
                masked.len()
            );
        }
        Command::Eval {
            common,
            mask,
            truth,
            name,
        } => {
            if mask.len() != truth.len() {
                return Err(fail(
                    Stage::Eval,
                    "--mask and --truth must be given the same number of times",
                ));
            }
            let config = load_config(&common)?;
            let mut ws = Workspace::create(&common.out_dir, config)?;
            let mut pairs = Vec::with_capacity(mask.len());
            for (i, (m, t)) in mask.iter().zip(&truth).enumerate() {
                let label = name.get(i).cloned().unwrap_or_else(|| {
                    m.file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                        .unwrap_or_else(|| format!("scene{i}"))
                });
                let pred = load_mask(&mut ws, m, Stage::Eval)?;
                let gt = io::read_mask(t).map_err(|e| PipelineError::new(Stage::Eval, e))?;
                ws.record_input("truth", t)?;
                pairs.push((label, pred, gt));
            }
            let report = pipeline::stage_eval(&mut ws, &pairs)?;
            ws.finish()?;
            let mut rows: Vec<_> = report.scenes.iter().map(|s| (s.name.as_str(), &s.metrics)).collect();
            if report.scenes.len() > 1 {
                rows.push(("micro-average", &report.micro_average));
            }
            print!("{}", metrics_table(rows));
        }
        Command::Pipeline {
            common,
            cube,
            proposals,
            truth,
            strict_schema,
        } => {
            let mut config = require_config(&common, Stage::Config)?;
            let inputs = &mut config.inputs;
            inputs.cube = cube.cube.or(inputs.cube.take());
            inputs.wavelengths = cube.wavelengths.or(inputs.wavelengths.take());
            inputs.proposals = proposals.or(inputs.proposals.take());
            inputs.truth = truth.or(inputs.truth.take());
            let summary = run_pipeline(
                &config,
                &common.out_dir,
                PipelineOptions {
                    schema: schema_mode(strict_schema),
                },
            )?;
            println!(
                "kept {} of {} vectors (reduction {:.4}); {} proposal(s) kept, {} excluded",
                summary.stats.kept_vectors,
                summary.stats.total_vectors,
                summary.stats.reduction_ratio,
                summary.report.kept_ids.len(),
                summary.report.excluded_ids.len()
            );
            if let Some(n) = summary.mwm_features {
                println!("{n} pixel(s) with an absorption feature");
            }
            if let Some(eval) = &summary.eval {
                print!(
                    "{}",
                    metrics_table(eval.scenes.iter().map(|s| (s.name.as_str(), &s.metrics)))
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_env("HSMASK_LOG")
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
