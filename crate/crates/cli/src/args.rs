//! Command-line grammar and its translation into [`Job`]s.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use srland::eval::pipeline::DEFAULT_RADIUS;
use srland::{Error, GraphConfig, PipelineConfig, Result, Sampler, SceneSpec};

use crate::config::{preset_radius, Job, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "srland", version, about = "Spatially regularized active diffusion learning for hyperspectral images")]
#[command(after_help = "Exit codes: 0 success (a coverage warning goes to stderr), 1 usage or parameter error, \
2 I/O or file format error, 3 numerical failure, 4 disconnected graph.")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cube and ground truth.
    Synth(SynthArgs),
    /// Label an image from a query budget and score it.
    Run(RunArgs),
    /// Accuracy as a function of the query budget.
    Curve(CurveArgs),
    /// Accuracy as a function of the spatial radius.
    Sweep(SweepArgs),
    /// Wall time of the full pipeline on synthetic scenes of growing size.
    Bench(BenchArgs),
    /// Score a predicted label file against ground truth.
    Eval(EvalArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GraphKind {
    Spatial,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Core,
    Boundary,
    Random,
}

impl From<SamplerArg> for Sampler {
    fn from(s: SamplerArg) -> Self {
        match s {
            SamplerArg::Core => Sampler::Core,
            SamplerArg::Boundary => Sampler::Boundary,
            SamplerArg::Random => Sampler::Random,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Image cube, NPY of shape (n1, n2, D).
    #[arg(long)]
    pub input: PathBuf,
    /// Ground truth, integer NPY of shape (n1, n2); 0 marks unlabeled pixels.
    #[arg(long)]
    pub gt: PathBuf,
    /// Dataset name for records; `salinas-a` and `indian-pines` also select
    /// their published spatial radius. Defaults to the input file stem.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long, value_enum)]
    pub graph: Option<GraphKind>,
    /// Spatial radius in pixels (spatial graph).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Spectral neighbors per point (knn graph).
    #[arg(long)]
    pub kg: Option<usize>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// Diffusion time.
    #[arg(long = "t")]
    pub t: Option<u32>,
    /// Eigenpairs kept.
    #[arg(long = "m")]
    pub m: Option<usize>,
    /// Neighbors in the density estimate.
    #[arg(long)]
    pub kde_k: Option<usize>,
    /// Query budget L.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Replace queries that repeat a class while some class is unseen.
    #[arg(long)]
    pub ensure_coverage: bool,
    #[arg(long)]
    pub consensus_threshold: Option<f64>,
    /// Graph kernel bandwidth; defaults to the mean edge length.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Variance of the preprocessing noise; 0 disables it.
    #[arg(long)]
    pub noise_variance: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Modes ranked before sampling.
    #[arg(long)]
    pub modes: Option<usize>,
}

impl PipelineArgs {
    /// Applies the flags over the defaults, with dataset presets in between.
    pub fn resolve(&self, dataset: &str) -> Result<PipelineConfig> {
        let mut config = PipelineConfig::default();
        config.graph = match self.graph.unwrap_or(GraphKind::Spatial) {
            GraphKind::Spatial => {
                if self.kg.is_some() {
                    return Err(Error::Usage("--kg only applies to --graph knn".into()));
                }
                let radius = self.radius.or_else(|| preset_radius(dataset)).unwrap_or(DEFAULT_RADIUS);
                GraphConfig::Spatial { radius }
            }
            GraphKind::Knn => {
                if self.radius.is_some() {
                    return Err(Error::Usage("--radius only applies to --graph spatial".into()));
                }
                GraphConfig::Knn { k: self.kg }
            }
        };
        if let Some(s) = self.sampler {
            config.sampler = s.into();
        }
        config.sigma = self.sigma;
        config.t = self.t.unwrap_or(config.t);
        config.m = self.m.or(config.m);
        config.kde_k = self.kde_k.unwrap_or(config.kde_k);
        config.budget = self.budget.unwrap_or(config.budget);
        config.ensure_coverage = self.ensure_coverage;
        config.consensus_threshold = self.consensus_threshold.unwrap_or(config.consensus_threshold);
        config.noise_variance = self.noise_variance.unwrap_or(config.noise_variance);
        config.seed = self.seed.unwrap_or(config.seed);
        config.modes = self.modes.or(config.modes);
        config.validate()?;
        Ok(config)
    }
}

impl DataArgs {
    fn run_config(&self, pipeline: &PipelineArgs) -> Result<RunConfig> {
        let dataset = match &self.dataset {
            Some(name) => name.clone(),
            None => self
                .input
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "image".into()),
        };
        Ok(RunConfig {
            pipeline: pipeline.resolve(&dataset)?,
            dataset,
            input: self.input.clone(),
            gt: self.gt.clone(),
            output_dir: self.output_dir.clone(),
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub height: usize,
    #[arg(long, default_value_t = 32)]
    pub width: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Closest distance between class means, in noise standard deviations.
    #[arg(long, default_value_t = 10.0)]
    pub separation: f64,
    /// Voronoi seeds per class.
    #[arg(long, default_value_t = 1)]
    pub smoothness: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Comma-separated query budgets.
    #[arg(long, value_delimiter = ',', required = true)]
    pub budgets: Vec<usize>,
    /// Repetitions per budget for the random sampler.
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Comma-separated spatial radii.
    #[arg(long, value_delimiter = ',', required = true)]
    pub radii: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Comma-separated pixel counts.
    #[arg(long, value_delimiter = ',', default_value = "4096,8192,16384,32768,65536")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Predicted labels, integer NPY of shape (n1, n2).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Also write the metrics JSON here.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded directory.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl Command {
    /// The job this command describes; `None` for commands that are not
    /// jobs (eval) or that load one from disk (replay).
    pub fn job(&self) -> Result<Option<Job>> {
        Ok(Some(match self {
            Command::Synth(a) => Job::Synth {
                spec: SceneSpec {
                    height: a.height,
                    width: a.width,
                    bands: a.bands,
                    classes: a.classes,
                    separation: a.separation,
                    smoothness: a.smoothness,
                    seed: a.seed,
                },
                output_dir: a.output_dir.clone(),
            },
            Command::Run(a) => Job::Run { config: a.data.run_config(&a.pipeline)? },
            Command::Curve(a) => {
                if a.budgets.contains(&0) {
                    return Err(Error::Usage("budgets must be >= 1".into()));
                }
                Job::Curve { config: a.data.run_config(&a.pipeline)?, budgets: a.budgets.clone(), trials: a.trials }
            }
            Command::Sweep(a) => {
                if a.pipeline.graph == Some(GraphKind::Knn) || a.pipeline.radius.is_some() {
                    return Err(Error::Usage("sweep sets the spatial radius itself; drop --graph knn and --radius".into()));
                }
                Job::Sweep { config: a.data.run_config(&a.pipeline)?, radii: a.radii.clone(), trials: a.trials }
            }
            Command::Bench(a) => Job::Bench { sizes: a.sizes.clone(), seed: a.seed, output_dir: a.output_dir.clone() },
            Command::Eval(_) | Command::Replay(_) => return Ok(None),
        }))
    }
}
