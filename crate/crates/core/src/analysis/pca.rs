//! Band-wise PCA fitted on masked-in spectra only.
//!
//! Mean and covariance never see background pixels, so changing any
//! masked-out value leaves the fitted model bit-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::eigen::symmetric_eigen;
use crate::maskproj::MaskedCube;

/// Eigenvalues at or below this fraction of the trace flag a degenerate covariance.
pub const DEGENERATE_FRACTION: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PcaError {
    #[error("need at least 2 masked-in vectors, got {0}")]
    TooFewVectors(usize),
    #[error("requested {requested} components but the cube has {bands} bands")]
    TooManyComponents { requested: usize, bands: usize },
    #[error("at least one component is required")]
    NoComponents,
    #[error("model has {model} bands, cube has {cube}")]
    BandMismatch { model: usize, cube: usize },
    #[error("masked-in spectrum at line {line}, sample {sample} is not finite")]
    NonFinite { line: usize, sample: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, `n_components × bands`.
    pub components: Vec<Vec<f64>>,
    /// Descending, one per component.
    pub eigenvalues: Vec<f64>,
    /// Trace of the covariance matrix.
    pub total_variance: f64,
    pub n_vectors: usize,
    /// Set when some eigenvalue of the full covariance is at or below
    /// `1e-12 * trace`. Reported, not fatal.
    pub degenerate_covariance: bool,
}

impl PcaModel {
    pub fn bands(&self) -> usize {
        self.mean.len()
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// `components · (x − mean)`.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(x).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect()
    }

    /// `mean + componentsᵀ · score`.
    pub fn reconstruct(&self, score: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.components.iter().zip(score) {
            for (o, ci) in out.iter_mut().zip(c) {
                *o += ci * s;
            }
        }
        out
    }
}

/// Mean and sample covariance (divisor `n − 1`, row-major `bands × bands`)
/// of the masked-in vectors.
pub fn masked_covariance(masked: &MaskedCube<'_>) -> Result<(Vec<f64>, Vec<f64>), PcaError> {
    let n = masked.len();
    if n < 2 {
        return Err(PcaError::TooFewVectors(n));
    }
    let bands = masked.bands();
    let mut mean = vec![0.0; bands];
    for (line, sample, spec) in masked.vectors() {
        if spec.iter().any(|v| !v.is_finite()) {
            return Err(PcaError::NonFinite { line, sample });
        }
        for (m, v) in mean.iter_mut().zip(spec) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut cov = vec![0.0; bands * bands];
    let mut centered = vec![0.0; bands];
    for (_, _, spec) in masked.vectors() {
        for ((c, v), m) in centered.iter_mut().zip(spec).zip(&mean) {
            *c = v - m;
        }
        for i in 0..bands {
            let ci = centered[i];
            for j in i..bands {
                cov[i * bands + j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..bands {
        for j in i..bands {
            let v = cov[i * bands + j] / denom;
            cov[i * bands + j] = v;
            cov[j * bands + i] = v;
        }
    }
    Ok((mean, cov))
}

/// Flips `v` so its largest-magnitude entry (first one on ties) is positive.
fn normalize_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fits PCA on the masked-in spectra.
pub fn masked_pca(masked: &MaskedCube<'_>, n_components: usize) -> Result<PcaModel, PcaError> {
    let bands = masked.bands();
    if n_components == 0 {
        return Err(PcaError::NoComponents);
    }
    if n_components > bands {
        return Err(PcaError::TooManyComponents {
            requested: n_components,
            bands,
        });
    }
    let (mean, cov) = masked_covariance(masked)?;
    let trace: f64 = (0..bands).map(|i| cov[i * bands + i]).sum();
    let eig = symmetric_eigen(&cov, bands);
    let eigenvalues: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0)).collect();
    let degenerate_covariance = eigenvalues.iter().any(|&v| v <= DEGENERATE_FRACTION * trace);
    let components = eig
        .vectors
        .into_iter()
        .take(n_components)
        .map(|mut v| {
            normalize_sign(&mut v);
            v
        })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        eigenvalues: eigenvalues[..n_components].to_vec(),
        total_variance: trace,
        n_vectors: masked.len(),
        degenerate_covariance,
    })
}

/// Principal-component scores of every masked-in vector, in extraction order.
pub fn project(model: &PcaModel, masked: &MaskedCube<'_>) -> Result<Vec<Vec<f64>>, PcaError> {
    if model.bands() != masked.bands() {
        return Err(PcaError::BandMismatch {
            model: model.bands(),
            cube: masked.bands(),
        });
    }
    Ok(masked.vectors().map(|(_, _, spec)| model.transform(spec)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::HyperCube;
    use crate::mask::BinaryMask;
    use crate::maskproj::apply_mask;

    fn cube_from_vectors(vectors: &[Vec<f64>]) -> HyperCube {
        let bands = vectors[0].len();
        HyperCube::from_fn(vectors.len(), 1, bands, None, |b, _, s| vectors[s][b]).unwrap()
    }

    #[test]
    fn perfectly_correlated_line() {
        let cube = cube_from_vectors(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]]);
        let mask = BinaryMask::full(3, 1).unwrap();
        let masked = apply_mask(&cube, &mask, f64::NAN).unwrap();
        let model = masked_pca(&masked, 2).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((model.components[0][0] - h).abs() < 1e-12);
        assert!((model.components[0][1] - h).abs() < 1e-12);
        assert!((model.eigenvalues[0] - 2.0).abs() < 1e-12);
        assert!(model.eigenvalues[1].abs() < 1e-12);
        assert_eq!(model.mean, vec![2.0, 2.0]);
        assert!(model.degenerate_covariance);
    }

    #[test]
    fn repeated_vector_is_degenerate_not_an_error() {
        let cube = cube_from_vectors(&vec![vec![0.3, 0.7, 0.1]; 5]);
        let mask = BinaryMask::full(5, 1).unwrap();
        let model = masked_pca(&apply_mask(&cube, &mask, 0.0).unwrap(), 3).unwrap();
        assert!(model.eigenvalues.iter().all(|&v| v == 0.0));
        assert!(model.degenerate_covariance);
    }

    #[test]
    fn too_few_vectors_and_bad_component_counts() {
        let cube = cube_from_vectors(&[vec![1.0, 2.0], vec![2.0, 1.0]]);
        let one = BinaryMask::from_fn(2, 1, |x, _| x == 0).unwrap();
        assert_eq!(
            masked_pca(&apply_mask(&cube, &one, 0.0).unwrap(), 1),
            Err(PcaError::TooFewVectors(1))
        );
        let all = BinaryMask::full(2, 1).unwrap();
        let masked = apply_mask(&cube, &all, 0.0).unwrap();
        assert_eq!(masked_pca(&masked, 0), Err(PcaError::NoComponents));
        assert!(matches!(
            masked_pca(&masked, 3),
            Err(PcaError::TooManyComponents { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        let vectors = vec![
            vec![1.0, 0.0, 2.0],
            vec![0.0, 3.0, 1.0],
            vec![2.0, 1.0, 0.0],
            vec![1.5, 2.5, 2.0],
        ];
        let cube = cube_from_vectors(&vectors);
        let mask = BinaryMask::full(4, 1).unwrap();
        let masked = apply_mask(&cube, &mask, 0.0).unwrap();
        let model = masked_pca(&masked, 3).unwrap();

        assert!(model.transform(&model.mean).iter().all(|s| s.abs() < 1e-15));
        let shifted: Vec<f64> = model
            .mean
            .iter()
            .zip(&model.components[0])
            .map(|(m, c)| m + c)
            .collect();
        let score = model.transform(&shifted);
        assert!((score[0] - 1.0).abs() < 1e-12 && score[1].abs() < 1e-12 && score[2].abs() < 1e-12);

        for (s, v) in project(&model, &masked).unwrap().iter().zip(&vectors) {
            for (r, x) in model.reconstruct(s).iter().zip(v) {
                assert!((r - x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn band_mismatch() {
        let a = cube_from_vectors(&[vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.5]]);
        let b = cube_from_vectors(&[vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 0.0]]);
        let ma = BinaryMask::full(3, 1).unwrap();
        let mb = BinaryMask::full(2, 1).unwrap();
        let model = masked_pca(&apply_mask(&a, &ma, 0.0).unwrap(), 1).unwrap();
        assert!(matches!(
            project(&model, &apply_mask(&b, &mb, 0.0).unwrap()),
            Err(PcaError::BandMismatch { model: 2, cube: 3 })
        ));
    }

    #[test]
    fn sign_convention() {
        let mut v = vec![0.2, -0.9, 0.3];
        normalize_sign(&mut v);
        assert_eq!(v, vec![-0.2, 0.9, -0.3]);
    }
}
