//! Downstream analytics run on the masked cube.

pub mod eigen;
pub mod mwm;
pub mod pca;

pub use mwm::{continuum_removal, min_wavelength, mwm_map, Feature, MwmError, MwmMap};
pub use pca::{masked_covariance, masked_pca, project, PcaError, PcaModel};
