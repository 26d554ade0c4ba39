//! Minimum wavelength mapping: continuum removal by the upper convex hull,
//! then the deepest absorption feature located by a three-point parabola.

use std::cmp::Ordering;

use thiserror::Error;

use crate::cube::HyperCube;
use crate::maskproj::MaskedCube;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MwmError {
    #[error("need at least 3 bands, got {0}")]
    TooFewBands(usize),
    #[error("{values} values but {wavelengths} wavelengths")]
    LengthMismatch { values: usize, wavelengths: usize },
    #[error("wavelengths must be strictly increasing (index {0})")]
    WavelengthOrder(usize),
    #[error("reflectance at band {index} is {value}; continuum removal needs positive values")]
    NonPositiveReflectance { index: usize, value: f64 },
    #[error("cube has no wavelength metadata; supply band centres before running minimum wavelength mapping")]
    MissingWavelengths,
}

/// Divides a spectrum by its upper convex hull over `(wavelength, value)`.
///
/// Hull vertices map to exactly 1.0 and every other band to at most 1.0.
pub fn continuum_removal(spectrum: &[f64], wavelengths: &[f64]) -> Result<Vec<f64>, MwmError> {
    let n = spectrum.len();
    if wavelengths.len() != n {
        return Err(MwmError::LengthMismatch {
            values: n,
            wavelengths: wavelengths.len(),
        });
    }
    if n < 3 {
        return Err(MwmError::TooFewBands(n));
    }
    if let Some(i) = wavelengths
        .windows(2)
        .position(|w| w[1].partial_cmp(&w[0]) != Some(Ordering::Greater))
    {
        return Err(MwmError::WavelengthOrder(i + 1));
    }
    if let Some((index, &value)) = spectrum
        .iter()
        .enumerate()
        .find(|(_, v)| v.partial_cmp(&&0.0) != Some(Ordering::Greater))
    {
        return Err(MwmError::NonPositiveReflectance { index, value });
    }

    // Monotone chain, upper half. Collinear points stay on the hull.
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (wavelengths[b] - wavelengths[a]) * (spectrum[i] - spectrum[a])
                - (spectrum[b] - spectrum[a]) * (wavelengths[i] - wavelengths[a]);
            if cross > 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }

    let mut out = vec![1.0; n];
    for seg in hull.windows(2) {
        let (a, c) = (seg[0], seg[1]);
        let slope = (spectrum[c] - spectrum[a]) / (wavelengths[c] - wavelengths[a]);
        for i in (a + 1)..c {
            let h = spectrum[a] + slope * (wavelengths[i] - wavelengths[a]);
            out[i] = (spectrum[i] / h).min(1.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    /// Interpolated feature position in nm.
    pub wavelength: f64,
    /// `1 − value` at the interpolated minimum, in `[0, 1]`.
    pub depth: f64,
}

/// Locates the deepest sample of a continuum-removed spectrum and refines it
/// with the parabola through it and its two neighbours.
///
/// Returns `None` when the minimum sits on either spectral edge, when the
/// depth is below `depth_threshold`, or when the input is unusable.
pub fn min_wavelength(spectrum: &[f64], wavelengths: &[f64], depth_threshold: f64) -> Option<Feature> {
    let n = spectrum.len();
    if n < 3 || wavelengths.len() != n || spectrum.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut i = 0;
    for (k, &v) in spectrum.iter().enumerate() {
        if v < spectrum[i] {
            i = k;
        }
    }
    if i == 0 || i == n - 1 {
        return None;
    }

    // Offsets from the centre sample: y - y1 = a t^2 + b t.
    let (x1, y1) = (wavelengths[i], spectrum[i]);
    let (d0, e0) = (wavelengths[i - 1] - x1, spectrum[i - 1] - y1);
    let (d2, e2) = (wavelengths[i + 1] - x1, spectrum[i + 1] - y1);
    let curvature = e0 * d2 - e2 * d0;
    let (offset, value) = if curvature > 0.0 {
        let denom = d0 * d2 * (d0 - d2);
        let a = curvature / denom;
        let b = (e2 * d0 * d0 - e0 * d2 * d2) / denom;
        let t = (-b / (2.0 * a)).clamp(d0, d2);
        (t, y1 + a * t * t + b * t)
    } else {
        (0.0, y1)
    };

    let depth = (1.0 - value).clamp(0.0, 1.0);
    if depth < depth_threshold {
        return None;
    }
    let lo = wavelengths[0];
    let hi = wavelengths[n - 1];
    Some(Feature {
        wavelength: (x1 + offset).clamp(lo, hi),
        depth,
    })
}

/// Per-pixel feature wavelength and depth; NaN where there is no feature or
/// the pixel is masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct MwmMap {
    pub width: usize,
    pub height: usize,
    pub wavelength: Vec<f64>,
    pub depth: Vec<f64>,
}

impl MwmMap {
    pub fn feature_at(&self, x: usize, y: usize) -> Option<Feature> {
        let i = y * self.width + x;
        let wavelength = self.wavelength[i];
        (!wavelength.is_nan()).then(|| Feature {
            wavelength,
            depth: self.depth[i],
        })
    }

    pub fn feature_count(&self) -> usize {
        self.wavelength.iter().filter(|w| !w.is_nan()).count()
    }

    /// Two-band raster: band 0 feature wavelength, band 1 depth.
    pub fn to_cube(&self) -> HyperCube {
        let data = self.wavelength.iter().chain(&self.depth).copied().collect();
        HyperCube::new_allow_nan(self.width, self.height, 2, None, data).expect("map dimensions are consistent")
    }
}

/// Runs continuum removal and feature location on every masked-in pixel.
/// Pixels with non-positive reflectance get no feature.
pub fn mwm_map(masked: &MaskedCube<'_>, depth_threshold: f64) -> Result<MwmMap, MwmError> {
    let cube = masked.cube();
    let wavelengths = cube.wavelengths().ok_or(MwmError::MissingWavelengths)?;
    if cube.bands() < 3 {
        return Err(MwmError::TooFewBands(cube.bands()));
    }
    let (width, height) = (cube.samples(), cube.lines());
    let mut map = MwmMap {
        width,
        height,
        wavelength: vec![f64::NAN; width * height],
        depth: vec![f64::NAN; width * height],
    };
    for (line, sample, spec) in masked.vectors() {
        let feature = match continuum_removal(spec, wavelengths) {
            Ok(cr) => min_wavelength(&cr, wavelengths, depth_threshold),
            Err(MwmError::NonPositiveReflectance { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(f) = feature {
            let i = line * width + sample;
            map.wavelength[i] = f.wavelength;
            map.depth[i] = f.depth;
        }
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::BinaryMask;
    use crate::maskproj::apply_mask;

    fn grid(start: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| start + step * i as f64).collect()
    }

    #[test]
    fn linear_spectrum_is_all_ones() {
        let wl = grid(400.0, 8.0, 16);
        let spec: Vec<f64> = wl.iter().map(|w| 0.25 + w / 1024.0).collect();
        assert!(continuum_removal(&spec, &wl).unwrap().iter().all(|&v| v == 1.0));

        let wl = grid(412.3, 7.1, 40);
        let spec: Vec<f64> = wl.iter().map(|w| 0.13 + 0.00037 * w).collect();
        assert!(continuum_removal(&spec, &wl)
            .unwrap()
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12 && v <= 1.0));
    }

    #[test]
    fn v_shape() {
        let cr = continuum_removal(&[1.0, 0.5, 1.0], &[500.0, 600.0, 700.0]).unwrap();
        assert_eq!(cr, vec![1.0, 0.5, 1.0]);
    }

    #[test]
    fn concave_up_endpoints_touch_hull() {
        let wl = grid(500.0, 10.0, 21);
        let spec: Vec<f64> = wl.iter().map(|w| 0.5 + ((w - 580.0) / 100.0).powi(2)).collect();
        let cr = continuum_removal(&spec, &wl).unwrap();
        assert_eq!(cr[0], 1.0);
        assert_eq!(cr[20], 1.0);
        assert!(cr.iter().all(|&v| v <= 1.0));
    }

    #[test]
    fn continuum_removal_errors() {
        let wl = [500.0, 600.0, 700.0];
        assert_eq!(
            continuum_removal(&[1.0, 0.0, 1.0], &wl),
            Err(MwmError::NonPositiveReflectance { index: 1, value: 0.0 })
        );
        assert_eq!(continuum_removal(&[1.0, 1.0], &wl[..2]), Err(MwmError::TooFewBands(2)));
        assert_eq!(
            continuum_removal(&[1.0, 0.5, 1.0], &[500.0, 500.0, 600.0]),
            Err(MwmError::WavelengthOrder(1))
        );
        assert!(matches!(
            continuum_removal(&[1.0, 0.5], &wl),
            Err(MwmError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn exact_parabola_vertex() {
        let wl = grid(500.0, 10.0, 21);
        let spec: Vec<f64> = wl.iter().map(|w| 0.1 * ((w - 600.0) / 100.0).powi(2) + 0.5).collect();
        let f = min_wavelength(&spec, &wl, 0.0).unwrap();
        assert_eq!(f.wavelength, 600.0);
        assert_eq!(f.depth, 0.5);
    }

    #[test]
    fn edge_minimum_is_none() {
        let wl = grid(500.0, 10.0, 10);
        let rising: Vec<f64> = (0..10).map(|i| 0.5 + 0.05 * i as f64).collect();
        assert_eq!(min_wavelength(&rising, &wl, 0.0), None);
        let falling: Vec<f64> = rising.iter().rev().copied().collect();
        assert_eq!(min_wavelength(&falling, &wl, 0.0), None);
    }

    #[test]
    fn depth_threshold_and_flat_bottom() {
        let wl = [500.0, 510.0, 520.0, 530.0];
        assert_eq!(min_wavelength(&[1.0, 0.98, 0.99, 1.0], &wl, 0.05), None);
        let flat = min_wavelength(&[1.0, 0.8, 0.8, 1.0], &wl, 0.0).unwrap();
        // Parabola through (500, 1.0), (510, 0.8), (520, 0.8): vertex at 515.
        assert!((flat.wavelength - 515.0).abs() < 1e-9);
        assert!((flat.depth - 0.225).abs() < 1e-12);
    }

    #[test]
    fn map_requires_wavelengths() {
        let cube = HyperCube::from_fn(2, 1, 3, None, |b, _, _| 1.0 - 0.1 * (b % 2) as f64).unwrap();
        let mask = BinaryMask::full(2, 1).unwrap();
        let masked = apply_mask(&cube, &mask, f64::NAN).unwrap();
        assert_eq!(mwm_map(&masked, 0.0), Err(MwmError::MissingWavelengths));

        let cube = cube.with_wavelengths(vec![500.0, 600.0, 700.0]).unwrap();
        let mask = BinaryMask::from_fn(2, 1, |x, _| x == 1).unwrap();
        let masked = apply_mask(&cube, &mask, f64::NAN).unwrap();
        let map = mwm_map(&masked, 0.0).unwrap();
        assert_eq!(map.feature_at(0, 0), None);
        let f = map.feature_at(1, 0).unwrap();
        assert_eq!(f.wavelength, 600.0);
        assert!((f.depth - 0.1).abs() < 1e-12);
        assert_eq!(map.to_cube().bands(), 2);
    }
}
