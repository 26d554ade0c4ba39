//! Regenerates the synthetic test scene under `tests/fixtures/scene`.
//!
//! Layout (40 x 30 pixels, 8 bands, float32):
//!   A      x 2..10,  y 3..11   kept
//!   B      x 15..25, y 5..13   kept
//!   label  x 18..22, y 7..10   inside B, removed by the "label" prompt
//!   C      x 30..36, y 20..26  only a sub-threshold detection, unmatched
//!   tray   x 0..40,  y 26..30  matched by "object" and removed by "tray"
//!   ghost  x 30..38, y 2..8    predicted IoU below threshold
//! Final mask = A + B - label = 64 + 80 - 12 = 132 pixels.
//!
//! Usage: cargo run -p hsmask-core --example make_fixture [out_dir]

use std::fs;
use std::path::PathBuf;

use hsmask_core::bbox::BBox;
use hsmask_core::composite::BandTriple;
use hsmask_core::config::{AnalysisConfig, InputPaths, PipelineConfig, Prompt};
use hsmask_core::cube::HyperCube;
use hsmask_core::envi::{write_envi, DataType, Interleave, WriteOptions};
use hsmask_core::mask::BinaryMask;
use hsmask_core::proposals::{Detection, ImageInfo, ProposalsFile, SegmentProposal};

const W: usize = 40;
const H: usize = 30;
const WAVELENGTHS: [f64; 8] = [500.0, 550.0, 600.0, 650.0, 700.0, 750.0, 800.0, 850.0];

fn in_rect(x: usize, y: usize, (x0, y0, x1, y1): (usize, usize, usize, usize)) -> bool {
    (x0..x1).contains(&x) && (y0..y1).contains(&y)
}

const A: (usize, usize, usize, usize) = (2, 3, 10, 11);
const B: (usize, usize, usize, usize) = (15, 5, 25, 13);
const LABEL: (usize, usize, usize, usize) = (18, 7, 22, 10);
const C: (usize, usize, usize, usize) = (30, 20, 36, 26);
const TRAY: (usize, usize, usize, usize) = (0, 26, 40, 30);
const GHOST: (usize, usize, usize, usize) = (30, 2, 38, 8);

fn dip(wl: f64, centre: f64, width: f64) -> f64 {
    (-((wl - centre) / width).powi(2)).exp()
}

fn reflectance(band: usize, y: usize, x: usize) -> f64 {
    let wl = WAVELENGTHS[band];
    let t = (wl - 500.0) / 350.0;
    let jitter = ((x * 7 + y * 3 + band * 5) % 11) as f64 * 0.002;
    let v = if in_rect(x, y, LABEL) {
        0.85 + 0.02 * t
    } else if in_rect(x, y, A) {
        0.6 - 0.25 * dip(wl, 640.0, 70.0)
    } else if in_rect(x, y, B) {
        0.5 + 0.05 * t - 0.2 * dip(wl, 710.0, 60.0)
    } else if in_rect(x, y, C) {
        0.35 - 0.1 * dip(wl, 600.0, 50.0)
    } else if in_rect(x, y, TRAY) {
        0.4 + 0.1 * t
    } else if in_rect(x, y, GHOST) {
        0.3 + 0.05 * t
    } else {
        0.2 + 0.05 * t
    };
    (v + jitter) as f32 as f64
}

fn rect_mask(r: (usize, usize, usize, usize)) -> BinaryMask {
    BinaryMask::from_fn(W, H, |x, y| in_rect(x, y, r)).unwrap()
}

fn detection(bbox: BBox, prompt: &str, confidence: f64) -> Detection {
    Detection {
        bbox,
        phrase: prompt.to_string(),
        confidence,
        prompt: prompt.to_string(),
        box_threshold: None,
    }
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scene"));
    fs::create_dir_all(&out).unwrap();

    let cube = HyperCube::from_fn(W, H, WAVELENGTHS.len(), Some(WAVELENGTHS.to_vec()), reflectance).unwrap();
    write_envi(
        &out.join("scene"),
        &cube,
        &WriteOptions::new(Interleave::Bil, DataType::F32),
    )
    .unwrap();

    let config = PipelineConfig {
        points_per_side: 128,
        points_per_batch: 128,
        pred_iou_thresh: 0.7,
        crop_n_points_downscale_factor: 1,
        prompts: vec![
            Prompt::keep("object", 0.25, 0.25),
            Prompt::exclude("tray", 0.3, 0.25),
            Prompt::exclude("label", 0.3, 0.25),
        ],
        margin_c: 2,
        band_triple: BandTriple::new(6, 3, 1),
        stretch: Default::default(),
        no_data_fill: f64::NAN,
        analysis: AnalysisConfig {
            pca_components: Some(3),
            mwm_depth_threshold: Some(0.02),
        },
        inputs: InputPaths {
            cube: Some("scene.hdr".into()),
            proposals: Some("proposals.json".into()),
            truth: Some("truth.png".into()),
            wavelengths: None,
        },
        sidecar: None,
    };
    let mut config_json = serde_json::to_string_pretty(&config).unwrap();
    config_json.push('\n');
    fs::write(out.join("config.json"), config_json).unwrap();

    let proposals = vec![
        SegmentProposal::from_mask(1, rect_mask(A), 0.95, 0.97),
        SegmentProposal::from_mask(2, rect_mask(B), 0.92, 0.96),
        SegmentProposal::from_mask(3, rect_mask(C), 0.88, 0.93),
        SegmentProposal::from_mask(4, rect_mask(TRAY), 0.9, 0.95),
        SegmentProposal::from_mask(5, rect_mask(LABEL), 0.85, 0.9),
        SegmentProposal::from_mask(6, rect_mask(GHOST), 0.5, 0.8),
    ];
    let detections = vec![
        detection(BBox::new(1, 2, 11, 12), "object", 0.62),
        detection(BBox::new(14, 4, 26, 14), "object", 0.55),
        detection(BBox::new(0, 25, 40, 30), "object", 0.31),
        detection(BBox::new(29, 1, 39, 9), "object", 0.7),
        detection(BBox::new(29, 19, 37, 27), "object", 0.2),
        detection(BBox::new(0, 26, 40, 30), "tray", 0.5),
        detection(BBox::new(17, 6, 22, 10), "label", 0.45),
    ];
    let echo = match serde_json::to_value(&config).unwrap() {
        serde_json::Value::Object(map) => map
            .into_iter()
            .filter(|(k, _)| {
                matches!(
                    k.as_str(),
                    "points_per_side"
                        | "points_per_batch"
                        | "pred_iou_thresh"
                        | "crop_n_points_downscale_factor"
                        | "prompts"
                )
            })
            .collect(),
        _ => unreachable!(),
    };
    let file = ProposalsFile {
        image: ImageInfo { width: W, height: H },
        proposals,
        detections,
        config_echo: echo,
    };
    file.validate().unwrap();
    fs::write(out.join("proposals.json"), file.to_json()).unwrap();

    // Annotated truth: the kept objects, with one extra row under A.
    let truth = image::GrayImage::from_fn(W as u32, H as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let on = (in_rect(x, y, (2, 3, 10, 12)) || in_rect(x, y, B)) && !in_rect(x, y, LABEL);
        image::Luma([if on { 255 } else { 0 }])
    });
    truth.save(out.join("truth.png")).unwrap();
    println!("fixture written to {}", out.display());
}
