//! Projection of the final mask onto the cube.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::HyperCube;
use crate::mask::BinaryMask;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("mask is {mask:?} but the cube is {cube:?} (samples x lines)")]
pub struct DimensionMismatch {
    pub mask: (usize, usize),
    pub cube: (usize, usize),
}

fn check(cube: &HyperCube, mask: &BinaryMask) -> Result<(), DimensionMismatch> {
    let cube_dims = (cube.samples(), cube.lines());
    if mask.dims() == cube_dims {
        Ok(())
    } else {
        Err(DimensionMismatch {
            mask: mask.dims(),
            cube: cube_dims,
        })
    }
}

/// The masked-in spectra of a cube, in row-major pixel order.
#[derive(Debug, Clone)]
pub struct MaskedCube<'a> {
    cube: &'a HyperCube,
    mask: &'a BinaryMask,
    fill: f64,
    coords: Vec<(usize, usize)>,
    /// `coords.len() × bands`, one spectrum per row.
    spectra: Vec<f64>,
}

impl<'a> MaskedCube<'a> {
    pub fn cube(&self) -> &HyperCube {
        self.cube
    }

    pub fn mask(&self) -> &BinaryMask {
        self.mask
    }

    pub fn bands(&self) -> usize {
        self.cube.bands()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// `(line, sample)` of each extracted vector.
    pub fn coords(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn spectrum(&self, i: usize) -> &[f64] {
        let b = self.bands();
        &self.spectra[i * b..(i + 1) * b]
    }

    /// Iterates `(line, sample, spectrum)`.
    pub fn vectors(&self) -> impl Iterator<Item = (usize, usize, &[f64])> + '_ {
        self.coords
            .iter()
            .zip(self.spectra.chunks_exact(self.bands()))
            .map(|(&(l, s), spec)| (l, s, spec))
    }

    /// Copy of the cube with every masked-out cell set to the fill value.
    pub fn filled_cube(&self) -> HyperCube {
        let (samples, lines, bands) = (self.cube.samples(), self.cube.lines(), self.cube.bands());
        let mut data = vec![self.fill; samples * lines * bands];
        for (l, s, spec) in self.vectors() {
            for (b, &v) in spec.iter().enumerate() {
                data[(b * lines + l) * samples + s] = v;
            }
        }
        HyperCube::new_allow_nan(
            samples,
            lines,
            bands,
            self.cube.wavelengths().map(<[f64]>::to_vec),
            data,
        )
        .expect("filled cube keeps the source dimensions")
    }
}

/// Extracts the spectra under `mask`. Off-pixels take `fill` in [`MaskedCube::filled_cube`].
pub fn apply_mask<'a>(
    cube: &'a HyperCube,
    mask: &'a BinaryMask,
    fill: f64,
) -> Result<MaskedCube<'a>, DimensionMismatch> {
    check(cube, mask)?;
    let samples = cube.samples();
    let bands = cube.bands();
    let n = mask.popcount() as usize;
    let mut coords = Vec::with_capacity(n);
    let mut spectra = Vec::with_capacity(n * bands);
    let mut buf = Vec::with_capacity(bands);
    for (start, end) in mask.on_spans() {
        for idx in start as usize..end as usize {
            let (l, s) = (idx / samples, idx % samples);
            cube.spectrum_into(l, s, &mut buf);
            coords.push((l, s));
            spectra.extend_from_slice(&buf);
        }
    }
    Ok(MaskedCube {
        cube,
        mask,
        fill,
        coords,
        spectra,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub total_vectors: u64,
    pub kept_vectors: u64,
    /// `1 - kept / total`.
    pub reduction_ratio: f64,
}

impl MaskStats {
    pub fn from_mask(mask: &BinaryMask) -> Self {
        let total = mask.area();
        let kept = mask.popcount();
        Self {
            total_vectors: total,
            kept_vectors: kept,
            reduction_ratio: 1.0 - kept as f64 / total as f64,
        }
    }
}

pub fn mask_stats(cube: &HyperCube, mask: &BinaryMask) -> Result<MaskStats, DimensionMismatch> {
    check(cube, mask)?;
    Ok(MaskStats::from_mask(mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube_2x3() -> HyperCube {
        HyperCube::from_fn(3, 2, 2, Some(vec![500.0, 600.0]), |b, l, s| (b * 10 + l * 3 + s) as f64).unwrap()
    }

    #[test]
    fn identity_mask() {
        let cube = cube_2x3();
        let mask = BinaryMask::full(3, 2).unwrap();
        let m = apply_mask(&cube, &mask, f64::NAN).unwrap();
        assert_eq!(m.len(), 6);
        assert_eq!(m.filled_cube(), cube);
        assert_eq!(m.spectrum(4), &[4.0, 14.0]);
        assert_eq!(m.coords()[4], (1, 1));
    }

    #[test]
    fn empty_mask() {
        let cube = cube_2x3();
        let mask = BinaryMask::empty(3, 2).unwrap();
        let m = apply_mask(&cube, &mask, -1.0).unwrap();
        assert!(m.is_empty());
        assert!(m.filled_cube().data().iter().all(|&v| v == -1.0));
        let stats = mask_stats(&cube, &mask).unwrap();
        assert_eq!(stats.reduction_ratio, 1.0);
        assert_eq!(stats.kept_vectors, 0);
    }

    #[test]
    fn nan_fill_is_bit_identical() {
        let cube = cube_2x3();
        let mask = BinaryMask::from_fn(3, 2, |x, y| x == y).unwrap();
        let filled = apply_mask(&cube, &mask, f64::NAN).unwrap().filled_cube();
        for l in 0..2 {
            for s in 0..3 {
                for b in 0..2 {
                    let v = filled.get(b, l, s);
                    if s == l {
                        assert_eq!(v, cube.get(b, l, s));
                    } else {
                        assert_eq!(v.to_bits(), f64::NAN.to_bits());
                    }
                }
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let cube = cube_2x3();
        let mask = BinaryMask::full(2, 3).unwrap();
        assert!(apply_mask(&cube, &mask, 0.0).is_err());
        assert!(mask_stats(&cube, &mask).is_err());
    }

    #[test]
    fn reduction_ratio() {
        let mask = BinaryMask::from_fn(1000, 727, |x, y| (y * 1000 + x) < 280_584).unwrap();
        let stats = MaskStats::from_mask(&mask);
        assert_eq!((stats.kept_vectors, stats.total_vectors), (280_584, 727_000));
        assert_eq!(stats.reduction_ratio, 1.0 - 280_584.0 / 727_000.0);
        assert_eq!(format!("{:.3}", stats.reduction_ratio), "0.614");
    }
}
