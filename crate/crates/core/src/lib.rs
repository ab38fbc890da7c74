//! Spatially regularized active learning with diffusion geometry.

pub mod dataset;
pub mod density;
pub mod eigen;
pub mod error;
pub mod eval;
pub mod export;
pub mod graph;
pub mod knn;
pub mod labeling;
pub mod modes;
pub mod npy;
pub mod sampling;
pub mod seed;
pub mod sparse;
pub mod spectral;

pub use dataset::{GroundTruth, Grid, ImageCube, SceneSpec};
pub use density::DensityProfile;
pub use error::{Error, Result};
pub use eval::{GraphConfig, PipelineConfig, RunRecord, Sampler};
pub use labeling::{LabelMap, Provenance};
pub use modes::ModeSet;
pub use sampling::{LabeledSet, Oracle};
pub use spectral::{DiffusionModel, Embedding};
