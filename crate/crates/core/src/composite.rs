//! Three-band false-colour composite that the segmenter and detector consume.

use std::cmp::Ordering;
use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cube::HyperCube;

#[derive(Debug, Error)]
pub enum CompositeError {
    #[error("band index {index} out of range for a cube with {bands} bands")]
    BandOutOfRange { index: usize, bands: usize },
    #[error("band {band} has no finite values")]
    EmptyCube { band: usize },
    #[error("invalid stretch: need 0 <= low < high <= 100, got ({low}, {high})")]
    InvalidStretch { low: f64, high: f64 },
    #[error("png encoding failed: {0}")]
    Png(#[from] image::ImageError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

/// Band indices (0-based) mapped to the red, green and blue channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandTriple {
    pub r_band: usize,
    pub g_band: usize,
    pub b_band: usize,
}

impl BandTriple {
    pub fn new(r_band: usize, g_band: usize, b_band: usize) -> Self {
        Self { r_band, g_band, b_band }
    }

    pub fn as_array(&self) -> [usize; 3] {
        [self.r_band, self.g_band, self.b_band]
    }

    pub fn validate(&self, bands: usize) -> Result<(), CompositeError> {
        match self.as_array().into_iter().find(|&i| i >= bands) {
            Some(index) => Err(CompositeError::BandOutOfRange { index, bands }),
            None => Ok(()),
        }
    }
}

/// Percentile pair used for the linear contrast stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stretch {
    pub p_low: f64,
    pub p_high: f64,
}

impl Default for Stretch {
    fn default() -> Self {
        Self {
            p_low: 2.0,
            p_high: 98.0,
        }
    }
}

impl Stretch {
    pub fn new(p_low: f64, p_high: f64) -> Result<Self, CompositeError> {
        let s = Self { p_low, p_high };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CompositeError> {
        if (0.0..=100.0).contains(&self.p_low) && (0.0..=100.0).contains(&self.p_high) && self.p_low < self.p_high {
            Ok(())
        } else {
            Err(CompositeError::InvalidStretch {
                low: self.p_low,
                high: self.p_high,
            })
        }
    }
}

/// 8-bit RGB raster with the cube's spatial dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, row-major.
    pub pixels: Vec<u8>,
}

impl CompositeImage {
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn to_png(&self) -> Result<Vec<u8>, CompositeError> {
        let img = RgbImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
            .expect("pixel buffer matches dimensions");
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn write_png(&self, path: &Path) -> Result<(), CompositeError> {
        std::fs::write(path, self.to_png()?)?;
        Ok(())
    }
}

/// Percentile of sorted data by linear interpolation between order
/// statistics (position `p/100 * (n - 1)`).
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (p / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Linear map of `value` from `[lo, hi]` onto `0..=255`, clamped and rounded.
/// A degenerate range (`hi <= lo`) and NaN map to 0.
pub fn stretch_value(value: f64, lo: f64, hi: f64) -> u8 {
    if hi.partial_cmp(&lo) != Some(Ordering::Greater) || value.is_nan() {
        return 0;
    }
    let t = (value - lo) / (hi - lo) * 255.0;
    t.clamp(0.0, 255.0).round() as u8
}

/// Stretches one band to 8 bits using its own percentile range.
pub fn stretch_band(values: &[f64], stretch: Stretch) -> Option<Vec<u8>> {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, stretch.p_low);
    let hi = percentile_sorted(&sorted, stretch.p_high);
    Some(values.iter().map(|&v| stretch_value(v, lo, hi)).collect())
}

/// Builds the false-colour composite from three bands of `cube`.
pub fn compose(cube: &HyperCube, triple: BandTriple, stretch: Stretch) -> Result<CompositeImage, CompositeError> {
    triple.validate(cube.bands())?;
    stretch.validate()?;
    let channels = triple
        .as_array()
        .into_iter()
        .map(|b| stretch_band(cube.band(b), stretch).ok_or(CompositeError::EmptyCube { band: b }))
        .collect::<Result<Vec<_>, _>>()?;
    let n = cube.pixel_count();
    let mut pixels = Vec::with_capacity(3 * n);
    for i in 0..n {
        pixels.extend(channels.iter().map(|c| c[i]));
    }
    Ok(CompositeImage {
        width: cube.samples(),
        height: cube.lines(),
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_band(values: Vec<f64>, samples: usize) -> HyperCube {
        let lines = values.len() / samples;
        HyperCube::new(samples, lines, 1, None, values).unwrap()
    }

    #[test]
    fn full_range_spans_0_to_255() {
        let values: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let cube = single_band(values, 11);
        let img = compose(&cube, BandTriple::new(0, 0, 0), Stretch::new(0.0, 100.0).unwrap()).unwrap();
        let red: Vec<u8> = (0..11).map(|x| img.pixel(x, 0)[0]).collect();
        assert_eq!(red[0], 0);
        assert_eq!(red[10], 255);
        assert!(red.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_band_maps_to_zero() {
        let cube = single_band(vec![0.5; 6], 3);
        let img = compose(&cube, BandTriple::new(0, 0, 0), Stretch::default()).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));
        assert_eq!((img.width, img.height), (3, 2));
    }

    #[test]
    fn percentile_stretch_on_0_to_99() {
        // Order-statistic interpolation on 100 samples: the 2nd percentile sits at
        // position 0.02 * 99 = 1.98 and the 98th at 0.98 * 99 = 97.02, so 50 maps to
        // 255 * 48.02 / 95.04 = 128.84..., which rounds to 129.
        let values: Vec<f64> = (0..100).map(f64::from).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        assert!((percentile_sorted(&sorted, 2.0) - 1.98).abs() < 1e-12);
        assert!((percentile_sorted(&sorted, 98.0) - 97.02).abs() < 1e-12);
        let mapped = stretch_band(&values, Stretch::default()).unwrap();
        assert_eq!(mapped[50], 129);
        // With the percentile bounds pinned at exactly 2 and 98 the map gives 127.5 -> 128.
        assert_eq!(stretch_value(50.0, 2.0, 98.0), 128);
    }

    #[test]
    fn band_out_of_range() {
        let cube = single_band(vec![1.0, 2.0], 2);
        let err = compose(&cube, BandTriple::new(0, 1, 0), Stretch::default()).unwrap_err();
        assert!(matches!(err, CompositeError::BandOutOfRange { index: 1, bands: 1 }));
    }

    #[test]
    fn all_nan_band_is_empty() {
        let cube = HyperCube::new_allow_nan(2, 1, 1, None, vec![f64::NAN; 2]).unwrap();
        assert!(matches!(
            compose(&cube, BandTriple::new(0, 0, 0), Stretch::default()),
            Err(CompositeError::EmptyCube { band: 0 })
        ));
    }

    #[test]
    fn invalid_stretch() {
        assert!(Stretch::new(50.0, 50.0).is_err());
        assert!(Stretch::new(-1.0, 50.0).is_err());
        assert!(Stretch::new(0.0, 100.5).is_err());
    }

    #[test]
    fn png_is_deterministic_and_decodable() {
        let cube = HyperCube::from_fn(5, 4, 3, None, |b, l, s| (b + l * s) as f64).unwrap();
        let img = compose(&cube, BandTriple::new(2, 1, 0), Stretch::default()).unwrap();
        let a = img.to_png().unwrap();
        assert_eq!(a, img.to_png().unwrap());
        let decoded = image::load_from_memory(&a).unwrap().to_rgb8();
        assert_eq!(decoded.dimensions(), (5, 4));
        assert_eq!(decoded.into_raw(), img.pixels);
    }
}
