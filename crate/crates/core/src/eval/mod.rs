//! Scoring and experiment drivers.

pub mod experiments;
pub mod metrics;
pub mod pipeline;

pub use experiments::{learning_curve, radius_sweep, scaling_benchmark, CurveRow, ScalingRow, SweepRow};
pub use metrics::{average_accuracy, cohens_kappa, evaluate, overall_accuracy, Metrics};
pub use pipeline::{run_pipeline, GraphConfig, PipelineConfig, PipelineOutput, RunRecord, Sampler};
