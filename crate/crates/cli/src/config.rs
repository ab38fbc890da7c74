//! Resolved run configuration and the manifest written beside every output.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use srland::eval::pipeline::StageTime;
use srland::{Error, PipelineConfig, Result, RunRecord, SceneSpec};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Spatial radius published for a named dataset, if any.
pub fn preset_radius(dataset: &str) -> Option<f64> {
    let key: String = dataset
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    match key.as_str() {
        "salinasa" => Some(11.0),
        "indianpines" => Some(14.0),
        _ => None,
    }
}

/// Everything one pipeline invocation needs, with defaults already resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: String,
    pub input: PathBuf,
    pub gt: PathBuf,
    pub output_dir: PathBuf,
    pub pipeline: PipelineConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.pipeline.validate()
    }
}

/// A replayable unit of work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase", deny_unknown_fields)]
pub enum Job {
    Synth { spec: SceneSpec, output_dir: PathBuf },
    Run { config: RunConfig },
    Curve { config: RunConfig, budgets: Vec<usize>, trials: usize },
    Sweep { config: RunConfig, radii: Vec<f64>, trials: usize },
    Bench { sizes: Vec<usize>, seed: u64, output_dir: PathBuf },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Synth { .. } => "synth",
            Job::Run { .. } => "run",
            Job::Curve { .. } => "curve",
            Job::Sweep { .. } => "sweep",
            Job::Bench { .. } => "bench",
        }
    }

    pub fn output_dir(&self) -> &Path {
        match self {
            Job::Synth { output_dir, .. } | Job::Bench { output_dir, .. } => output_dir,
            Job::Run { config } | Job::Curve { config, .. } | Job::Sweep { config, .. } => &config.output_dir,
        }
    }

    pub fn set_output_dir(&mut self, dir: PathBuf) {
        match self {
            Job::Synth { output_dir, .. } | Job::Bench { output_dir, .. } => *output_dir = dir,
            Job::Run { config } | Job::Curve { config, .. } | Job::Sweep { config, .. } => config.output_dir = dir,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub job: Job,
    /// Queries actually answered, for single runs.
    pub budget_used: Option<usize>,
    pub record: Option<RunRecord>,
    pub timings: Vec<StageTime>,
    pub seconds: f64,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(job: Job) -> Self {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            job,
            budget_used: None,
            record: None,
            timings: Vec::new(),
            seconds: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifests always serialize");
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use srland::GraphConfig;

    #[test]
    fn presets_ignore_case_and_separators() {
        assert_eq!(preset_radius("Salinas A"), Some(11.0));
        assert_eq!(preset_radius("salinas-a"), Some(11.0));
        assert_eq!(preset_radius("indian_pines"), Some(14.0));
        assert_eq!(preset_radius("pavia"), None);
    }

    #[test]
    fn job_round_trips_through_json() {
        let job = Job::Curve {
            config: RunConfig {
                dataset: "d".into(),
                input: "a.npy".into(),
                gt: "b.npy".into(),
                output_dir: "out".into(),
                pipeline: PipelineConfig { graph: GraphConfig::Knn { k: Some(7) }, ..PipelineConfig::default() },
            },
            budgets: vec![2, 4],
            trials: 3,
        };
        let text = serde_json::to_string(&job).unwrap();
        assert!(text.starts_with(r#"{"command":"curve""#));
        assert_eq!(serde_json::from_str::<Job>(&text).unwrap(), job);
    }

    #[test]
    fn unknown_manifest_fields_are_rejected() {
        let text = r#"{"command":"bench","sizes":[16],"seed":0,"output_dir":"o","extra":1}"#;
        assert!(serde_json::from_str::<Job>(text).is_err());
    }
}
