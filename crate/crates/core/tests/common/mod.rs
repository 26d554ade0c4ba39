//! Independent reference implementations and random generators shared by the
//! integration tests and the acceptance run.
#![allow(dead_code)]

use hsmask_core::bbox::BBox;
use hsmask_core::composite::BandTriple;
use hsmask_core::config::{PipelineConfig, Preset, Prompt, PromptRole};
use hsmask_core::cube::HyperCube;
use hsmask_core::mask::BinaryMask;
use hsmask_core::proposals::{Detection, ImageInfo, ProposalsFile, SegmentProposal};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- masks

pub fn random_bits(rng: &mut TestRng, w: usize, h: usize) -> Vec<bool> {
    // Mix dense, sparse and blocky fields so long runs and single pixels both occur.
    let style = rng.gen_range(0..4);
    let p: f64 = rng.gen();
    let (bx, by) = (rng.gen_range(1..=w), rng.gen_range(1..=h));
    let seeds: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(p)).collect();
    (0..w * h)
        .map(|i| match style {
            0 => seeds[i],
            1 => false,
            2 => true,
            _ => {
                let (x, y) = (i % w, i / w);
                seeds[(y / by * by) * w + x / bx * bx]
            }
        })
        .collect()
}

pub fn random_mask(rng: &mut TestRng, max_side: usize) -> BinaryMask {
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    BinaryMask::from_bitmap(w, h, &random_bits(rng, w, h)).unwrap()
}

/// Applies `op` pixel by pixel through `get`.
pub fn pixelwise(a: &BinaryMask, b: &BinaryMask, op: impl Fn(bool, bool) -> bool) -> Vec<bool> {
    let mut out = Vec::with_capacity(a.width() * a.height());
    for y in 0..a.height() {
        for x in 0..a.width() {
            out.push(op(a.get(x, y), b.get(x, y)));
        }
    }
    out
}

pub fn count_on(bits: &[bool]) -> u64 {
    bits.iter().filter(|&&b| b).count() as u64
}

// ------------------------------------------------------------ filtering

/// Containment with slack, evaluated on signed coordinates.
pub fn contained_with_margin(inner: &BBox, outer: &BBox, c: u32) -> bool {
    let c = c as i64;
    let i = [inner.x0, inner.y0, inner.x1, inner.y1].map(i64::from);
    let o = [outer.x0, outer.y0, outer.x1, outer.y1].map(i64::from);
    i[0] + c >= o[0] && i[1] + c >= o[1] && i[2] - c <= o[2] && i[3] - c <= o[3]
}

/// Final mask by brute force: a pixel is on iff some active proposal covering
/// it is selected and no active proposal covering it is hit by an exclude
/// detection.
pub fn filtering_oracle(file: &ProposalsFile, config: &PipelineConfig) -> Vec<bool> {
    let role_of = |d: &Detection| {
        let p = config.prompts.iter().find(|p| p.text == d.prompt).unwrap();
        (p.role, d.confidence >= p.box_threshold)
    };
    let has_keep = config.prompts.iter().any(|p| p.role == PromptRole::Keep);
    let hit = |prop: &SegmentProposal, role: PromptRole| {
        file.detections.iter().any(|d| {
            let (r, live) = role_of(d);
            r == role && live && contained_with_margin(&prop.bbox, &d.bbox, config.margin_c)
        })
    };
    let active: Vec<&SegmentProposal> = file
        .proposals
        .iter()
        .filter(|p| p.predicted_iou >= config.pred_iou_thresh)
        .collect();
    let selected: Vec<bool> = active.iter().map(|p| !has_keep || hit(p, PromptRole::Keep)).collect();
    let removed: Vec<bool> = active.iter().map(|p| hit(p, PromptRole::Exclude)).collect();

    let (w, h) = (file.image.width, file.image.height);
    let mut out = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut on = false;
            let mut off = false;
            for (k, p) in active.iter().enumerate() {
                if p.mask.get(x, y) {
                    on |= selected[k];
                    off |= removed[k];
                }
            }
            out[y * w + x] = on && !off;
        }
    }
    out
}

pub const KEEP_WORDS: [&str; 2] = ["object", "cores"];
pub const EXCLUDE_WORDS: [&str; 2] = ["tray", "label"];

fn random_box(rng: &mut TestRng, w: usize, h: usize) -> BBox {
    let x0 = rng.gen_range(0..w) as u32;
    let y0 = rng.gen_range(0..h) as u32;
    let x1 = rng.gen_range(x0 + 1..=w as u32);
    let y1 = rng.gen_range(y0 + 1..=h as u32);
    BBox::new(x0, y0, x1, y1)
}

/// Expands or shrinks a box by up to `jitter` per side, clipped to the raster.
fn jitter_box(rng: &mut TestRng, b: &BBox, jitter: i64, w: usize, h: usize) -> BBox {
    let mut side = |v: u32, lo: i64, hi: i64| (v as i64 + rng.gen_range(-jitter..=jitter)).clamp(lo, hi) as u32;
    let x0 = side(b.x0, 0, w as i64 - 1);
    let y0 = side(b.y0, 0, h as i64 - 1);
    let x1 = side(b.x1, x0 as i64 + 1, w as i64);
    let y1 = side(b.y1, y0 as i64 + 1, h as i64);
    BBox::new(x0, y0, x1, y1)
}

/// A random scene: ≤10 proposals (rectangles or blobs), ≤4 detections placed
/// near proposals so that matches are common, and a config mixing keep and
/// exclude prompts.
pub fn random_scene(rng: &mut TestRng, margin_c: u32) -> (ProposalsFile, PipelineConfig) {
    let w = rng.gen_range(8..=40);
    let h = rng.gen_range(8..=40);
    let n_props = rng.gen_range(0..=10);
    let mut proposals = Vec::new();
    for id in 0..n_props {
        let b = random_box(rng, w, h);
        let blob = rng.gen_bool(0.4);
        let density: f64 = rng.gen_range(0.3..1.0);
        let bits: Vec<bool> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                b.contains_pixel(x, y) && (!blob || rng.gen_bool(density))
            })
            .collect();
        let mask = BinaryMask::from_bitmap(w, h, &bits).unwrap();
        let Some(_) = mask.tight_bbox() else { continue };
        let iou = rng.gen_range(0.5..1.0);
        proposals.push(SegmentProposal::from_mask(
            id as u64 + 1,
            mask,
            iou,
            rng.gen_range(0.5..1.0),
        ));
    }

    let mut prompts = Vec::new();
    let with_keep = rng.gen_bool(0.8);
    if with_keep {
        for word in &KEEP_WORDS[..rng.gen_range(1..=2)] {
            prompts.push(Prompt::keep(word, rng.gen_range(0.1..0.5), 0.25));
        }
    }
    let n_excl = if with_keep {
        rng.gen_range(0..=2)
    } else {
        rng.gen_range(1..=2)
    };
    for word in &EXCLUDE_WORDS[..n_excl] {
        prompts.push(Prompt::exclude(word, rng.gen_range(0.1..0.5), 0.25));
    }
    if rng.gen_bool(0.5) {
        let k = rng.gen_range(0..prompts.len());
        let p = prompts.remove(k);
        prompts.push(p);
    }

    let n_dets = rng.gen_range(0..=4);
    let mut detections = Vec::new();
    for _ in 0..n_dets {
        let bbox = if !proposals.is_empty() && rng.gen_bool(0.75) {
            let p = &proposals[rng.gen_range(0..proposals.len())];
            jitter_box(rng, &p.bbox, 4, w, h)
        } else {
            random_box(rng, w, h)
        };
        let prompt = &prompts[rng.gen_range(0..prompts.len())].text;
        detections.push(Detection {
            bbox,
            phrase: prompt.clone(),
            confidence: rng.gen_range(0.05..0.95),
            prompt: prompt.clone(),
            box_threshold: None,
        });
    }

    let mut config = PipelineConfig::preset(Preset::LitterMonitoring, BandTriple::new(0, 0, 0));
    config.prompts = prompts;
    config.margin_c = margin_c;
    config.pred_iou_thresh = rng.gen_range(0.5..0.8);
    let file = ProposalsFile {
        image: ImageInfo { width: w, height: h },
        proposals,
        detections,
        config_echo: Default::default(),
    };
    (file, config)
}

// ------------------------------------------------------------ linear algebra

/// Mean and covariance with an explicit double loop over band pairs.
pub fn oracle_covariance(vectors: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = vectors.len();
    let b = vectors[0].len();
    let mean: Vec<f64> = (0..b)
        .map(|j| vectors.iter().map(|v| v[j]).sum::<f64>() / n as f64)
        .collect();
    let mut cov = vec![vec![0.0; b]; b];
    for i in 0..b {
        for j in 0..b {
            let s: f64 = vectors.iter().map(|v| (v[i] - mean[i]) * (v[j] - mean[j])).sum();
            cov[i][j] = s / (n - 1) as f64;
        }
    }
    (mean, cov)
}

/// Jacobi eigen-decomposition using the rotation angle directly
/// (`atan2`), sweeping until all off-diagonal entries are negligible.
/// Returns `(values, vectors)` sorted by descending value.
pub fn oracle_eigen(m: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut a = m.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let phi = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
                let (s, c) = phi.sin_cos();
                // G has c on the diagonal, G[p][q] = s, G[q][p] = -s; A <- Gᵀ A G.
                let mut g = vec![vec![0.0; n]; n];
                for (i, row) in g.iter_mut().enumerate() {
                    row[i] = 1.0;
                }
                g[p][p] = c;
                g[q][q] = c;
                g[p][q] = s;
                g[q][p] = -s;
                let ag: Vec<Vec<f64>> = (0..n)
                    .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * g[k][j]).sum()).collect())
                    .collect();
                a = (0..n)
                    .map(|i| (0..n).map(|j| (0..n).map(|k| g[k][i] * ag[k][j]).sum()).collect())
                    .collect();
                v = (0..n)
                    .map(|i| (0..n).map(|j| (0..n).map(|k| v[i][k] * g[k][j]).sum()).collect())
                    .collect();
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].partial_cmp(&a[i][i]).unwrap());
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&c| (0..n).map(|r| v[r][c]).collect()).collect();
    (values, vectors)
}

/// Random cube with values in `[0.05, 1.05)` and a random mask with at least
/// `min_on` on-pixels.
pub fn random_cube_and_mask(
    rng: &mut TestRng,
    max_side: usize,
    max_bands: usize,
    min_on: usize,
) -> (HyperCube, BinaryMask) {
    loop {
        let w = rng.gen_range(2..=max_side);
        let h = rng.gen_range(2..=max_side);
        let bands = rng.gen_range(2..=max_bands);
        // Correlated bands: a few latent factors plus noise.
        let factors: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..bands).map(|_| rng.gen_range(-0.3..0.3)).collect())
            .collect();
        let mut data = vec![0.0; w * h * bands];
        for px in 0..w * h {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for b in 0..bands {
                let v = 0.55 + (0..3).map(|k| z[k] * factors[k][b]).sum::<f64>() + rng.gen_range(-0.05..0.05);
                data[b * w * h + px] = v;
            }
        }
        let cube = HyperCube::new(w, h, bands, None, data).unwrap();
        let bits: Vec<bool> = (0..w * h).map(|_| rng.gen_bool(0.5)).collect();
        let mask = BinaryMask::from_bitmap(w, h, &bits).unwrap();
        if mask.popcount() as usize >= min_on {
            return (cube, mask);
        }
    }
}

/// `max |a − b| / max |b|`, the largest deviation relative to the reference's scale.
pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Flips `v` so its largest-magnitude entry is positive.
pub fn sign_normalized(v: &[f64]) -> Vec<f64> {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    let s = if v[best] < 0.0 { -1.0 } else { 1.0 };
    v.iter().map(|x| x * s).collect()
}

// ------------------------------------------------------------ analysis / metrics

/// Masked-in spectra in raster order, read straight from the cube.
pub fn masked_vectors(cube: &HyperCube, mask: &BinaryMask) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in 0..cube.lines() {
        for s in 0..cube.samples() {
            if mask.get(s, l) {
                out.push((0..cube.bands()).map(|b| cube.get(b, l, s)).collect());
            }
        }
    }
    out
}

/// Prediction and truth on a `w × h` raster realizing the given counts:
/// tp pixels first, then fp, then fn, the rest true negatives.
pub fn confusion_masks(tp: usize, fp: usize, fn_: usize, w: usize, h: usize) -> (BinaryMask, BinaryMask) {
    assert!(tp + fp + fn_ <= w * h);
    let pred = BinaryMask::from_fn(w, h, |x, y| y * w + x < tp + fp).unwrap();
    let truth = BinaryMask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        i < tp || (tp + fp..tp + fp + fn_).contains(&i)
    })
    .unwrap();
    (pred, truth)
}

/// Per-pixel (tp, fp, fn, tn).
pub fn oracle_counts(pred: &BinaryMask, truth: &BinaryMask) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            match (pred.get(x, y), truth.get(x, y)) {
                (true, true) => c.0 += 1,
                (true, false) => c.1 += 1,
                (false, true) => c.2 += 1,
                (false, false) => c.3 += 1,
            }
        }
    }
    c
}
