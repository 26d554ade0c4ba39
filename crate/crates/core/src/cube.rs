//! In-memory hyperspectral cube.
//!
//! Data is always held band-sequential (`band, line, sample`), whatever the
//! interleave of the file it came from.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CubeError {
    #[error("cube dimensions must be positive (samples={samples}, lines={lines}, bands={bands})")]
    ZeroDimension { samples: usize, lines: usize, bands: usize },
    #[error("data holds {actual} values, expected samples*lines*bands = {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("{actual} wavelengths given for {bands} bands")]
    WavelengthCount { bands: usize, actual: usize },
    #[error("wavelengths must be finite and strictly increasing (index {index})")]
    WavelengthOrder { index: usize },
    #[error("non-finite value at band {band}, line {line}, sample {sample}")]
    NonFinite { band: usize, line: usize, sample: usize },
}

/// A `bands × lines × samples` reflectance cube with optional band centres in nm.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    samples: usize,
    lines: usize,
    bands: usize,
    wavelengths: Option<Vec<f64>>,
    data: Vec<f64>,
}

impl HyperCube {
    /// Builds a cube from band-sequential data. All values must be finite.
    pub fn new(
        samples: usize,
        lines: usize,
        bands: usize,
        wavelengths: Option<Vec<f64>>,
        data: Vec<f64>,
    ) -> Result<Self, CubeError> {
        let cube = Self::new_allow_nan(samples, lines, bands, wavelengths, data)?;
        if let Some(i) = cube.data.iter().position(|v| !v.is_finite()) {
            return Err(cube.non_finite_at(i));
        }
        Ok(cube)
    }

    /// Like [`HyperCube::new`] but tolerates NaN no-data cells (infinities are still rejected).
    pub fn new_allow_nan(
        samples: usize,
        lines: usize,
        bands: usize,
        wavelengths: Option<Vec<f64>>,
        data: Vec<f64>,
    ) -> Result<Self, CubeError> {
        if samples == 0 || lines == 0 || bands == 0 {
            return Err(CubeError::ZeroDimension { samples, lines, bands });
        }
        let expected = samples * lines * bands;
        if data.len() != expected {
            return Err(CubeError::DataLength {
                expected,
                actual: data.len(),
            });
        }
        if let Some(wl) = &wavelengths {
            validate_wavelengths(wl, bands)?;
        }
        let cube = Self {
            samples,
            lines,
            bands,
            wavelengths,
            data,
        };
        if let Some(i) = cube.data.iter().position(|v| v.is_infinite()) {
            return Err(cube.non_finite_at(i));
        }
        Ok(cube)
    }

    /// Builds a cube by evaluating `f(band, line, sample)` for every cell.
    pub fn from_fn<F>(
        samples: usize,
        lines: usize,
        bands: usize,
        wavelengths: Option<Vec<f64>>,
        mut f: F,
    ) -> Result<Self, CubeError>
    where
        F: FnMut(usize, usize, usize) -> f64,
    {
        let mut data = Vec::with_capacity(samples * lines * bands);
        for b in 0..bands {
            for l in 0..lines {
                for s in 0..samples {
                    data.push(f(b, l, s));
                }
            }
        }
        Self::new(samples, lines, bands, wavelengths, data)
    }

    fn non_finite_at(&self, index: usize) -> CubeError {
        let plane = self.samples * self.lines;
        CubeError::NonFinite {
            band: index / plane,
            line: (index % plane) / self.samples,
            sample: index % self.samples,
        }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn lines(&self) -> usize {
        self.lines
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    /// Number of spatial pixels (spectral vectors), `lines * samples`.
    pub fn pixel_count(&self) -> usize {
        self.samples * self.lines
    }

    pub fn wavelengths(&self) -> Option<&[f64]> {
        self.wavelengths.as_deref()
    }

    /// Attaches (or replaces) band centre wavelengths in nm.
    pub fn with_wavelengths(mut self, wavelengths: Vec<f64>) -> Result<Self, CubeError> {
        validate_wavelengths(&wavelengths, self.bands)?;
        self.wavelengths = Some(wavelengths);
        Ok(self)
    }

    /// Band-sequential data.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, band: usize, line: usize, sample: usize) -> usize {
        (band * self.lines + line) * self.samples + sample
    }

    #[inline]
    pub fn get(&self, band: usize, line: usize, sample: usize) -> f64 {
        self.data[self.index(band, line, sample)]
    }

    #[inline]
    pub fn set(&mut self, band: usize, line: usize, sample: usize, value: f64) {
        let i = self.index(band, line, sample);
        self.data[i] = value;
    }

    /// One band as a row-major `lines × samples` plane.
    pub fn band(&self, band: usize) -> &[f64] {
        let plane = self.pixel_count();
        &self.data[band * plane..(band + 1) * plane]
    }

    /// Spectrum of one pixel, copied into `out` (cleared first).
    pub fn spectrum_into(&self, line: usize, sample: usize, out: &mut Vec<f64>) {
        out.clear();
        let plane = self.pixel_count();
        let offset = line * self.samples + sample;
        out.extend((0..self.bands).map(|b| self.data[b * plane + offset]));
    }

    pub fn spectrum(&self, line: usize, sample: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.bands);
        self.spectrum_into(line, sample, &mut out);
        out
    }
}

fn validate_wavelengths(wavelengths: &[f64], bands: usize) -> Result<(), CubeError> {
    if wavelengths.len() != bands {
        return Err(CubeError::WavelengthCount {
            bands,
            actual: wavelengths.len(),
        });
    }
    if let Some(i) = wavelengths.iter().position(|w| !w.is_finite()) {
        return Err(CubeError::WavelengthOrder { index: i });
    }
    if let Some(i) = wavelengths.windows(2).position(|w| w[1] <= w[0]) {
        return Err(CubeError::WavelengthOrder { index: i + 1 });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_band_sequential() {
        let cube = HyperCube::from_fn(3, 2, 2, None, |b, l, s| (b * 100 + l * 10 + s) as f64).unwrap();
        assert_eq!(cube.get(1, 1, 2), 112.0);
        assert_eq!(cube.band(1), &[100.0, 101.0, 102.0, 110.0, 111.0, 112.0]);
        assert_eq!(cube.spectrum(1, 0), vec![10.0, 110.0]);
    }

    #[test]
    fn rejects_bad_wavelengths() {
        let data = vec![0.0; 4];
        assert_eq!(
            HyperCube::new(2, 1, 2, Some(vec![500.0]), data.clone()),
            Err(CubeError::WavelengthCount { bands: 2, actual: 1 })
        );
        assert_eq!(
            HyperCube::new(2, 1, 2, Some(vec![500.0, 500.0]), data),
            Err(CubeError::WavelengthOrder { index: 1 })
        );
    }

    #[test]
    fn nan_only_allowed_explicitly() {
        let data = vec![1.0, f64::NAN];
        assert!(matches!(
            HyperCube::new(2, 1, 1, None, data.clone()),
            Err(CubeError::NonFinite {
                band: 0,
                line: 0,
                sample: 1
            })
        ));
        assert!(HyperCube::new_allow_nan(2, 1, 1, None, data).is_ok());
        assert!(HyperCube::new_allow_nan(1, 1, 1, None, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(
            HyperCube::new(0, 1, 1, None, vec![]),
            Err(CubeError::ZeroDimension { .. })
        ));
    }
}
