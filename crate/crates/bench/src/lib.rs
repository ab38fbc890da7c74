//! Fixtures shared by the criterion benches.

use srland::eval::experiments::{scaling_config, scaling_scene};
use srland::{GroundTruth, ImageCube, PipelineConfig};

/// The scaling benchmark's scene and configuration at `n` pixels.
pub fn fixture(n: usize) -> (ImageCube, GroundTruth, PipelineConfig) {
    let (cube, truth) = scaling_scene(n, 0).expect("valid scene size");
    (cube, truth, scaling_config(n))
}
