//! Hyperspectral ROI masking: ENVI cube I/O, false-colour composites,
//! proposal filtering against detector boxes, mask projection onto the cube
//! and masked analytics.

pub mod analysis;
pub mod bbox;
pub mod composite;
pub mod config;
pub mod cube;
pub mod envi;
pub mod filtering;
pub mod mask;
pub mod maskproj;
pub mod metrics;
pub mod pipeline;
pub mod proposals;

pub use bbox::BBox;
pub use config::{PipelineConfig, Preset, Prompt, PromptRole};
pub use cube::HyperCube;
pub use mask::BinaryMask;
