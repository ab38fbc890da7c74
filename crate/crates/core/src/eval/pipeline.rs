//! The full pipeline: graph, diffusion embedding, density, modes, queries,
//! propagation and scoring.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{inject_noise, GroundTruth, ImageCube, DEFAULT_NOISE_VARIANCE};
use crate::density::{estimate_density, DensityProfile, DEFAULT_KDE_NEIGHBORS};
use crate::eigen::EigenConfig;
use crate::error::{Error, Result};
use crate::eval::metrics::{evaluate, Metrics};
use crate::graph::{build_spatial_affinity, build_spectral_affinity, default_graph_k, to_markov, SpatialBall};
use crate::knn::NeighborTable;
use crate::labeling::{two_stage_label_with, Consensus, LabelMap, DEFAULT_CONSENSUS_THRESHOLD};
use crate::modes::{compute_rho_with, default_search_width, detect_modes, ModeSet, RhoProfile};
use crate::sampling::{answerable_modes, sample_boundary, sample_core, sample_random, LabeledSet, Oracle, Query};
use crate::seed;
use crate::spectral::{default_eigen_count, top_eigenpairs, Embedding, DEFAULT_DIFFUSION_TIME};

/// Spatial radius used when none is given.
pub const DEFAULT_RADIUS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GraphConfig {
    /// Edges between pixels within `radius` of each other.
    Spatial { radius: f64 },
    /// Edges to the `k` spectral nearest neighbors; `None` means `ceil(log2 n)`.
    Knn { k: Option<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampler {
    Core,
    Boundary,
    Random,
}

impl Sampler {
    pub fn as_str(self) -> &'static str {
        match self {
            Sampler::Core => "core",
            Sampler::Boundary => "boundary",
            Sampler::Random => "random",
        }
    }

    /// Whether repeated runs on the same data can differ.
    pub fn is_random(self) -> bool {
        self == Sampler::Random
    }
}

/// Every parameter of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub graph: GraphConfig,
    /// Graph kernel bandwidth; `None` uses the mean edge length.
    pub sigma: Option<f64>,
    pub t: u32,
    /// Eigenpairs kept; `None` means `min(50, n)`.
    pub m: Option<usize>,
    /// Neighbors in the density estimate.
    pub kde_k: usize,
    pub budget: usize,
    pub sampler: Sampler,
    pub ensure_coverage: bool,
    pub consensus_threshold: f64,
    pub noise_variance: f64,
    pub seed: u64,
    /// Modes ranked; `None` means the budget plus twice the class count.
    pub modes: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            graph: GraphConfig::Spatial { radius: DEFAULT_RADIUS },
            sigma: None,
            t: DEFAULT_DIFFUSION_TIME,
            m: None,
            kde_k: DEFAULT_KDE_NEIGHBORS,
            budget: 10,
            sampler: Sampler::Core,
            ensure_coverage: false,
            consensus_threshold: DEFAULT_CONSENSUS_THRESHOLD,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            seed: 0,
            modes: None,
        }
    }
}

impl PipelineConfig {
    /// Table-style name, e.g. `sr-core` or `boundary`.
    pub fn variant(&self) -> String {
        match self.graph {
            GraphConfig::Spatial { .. } => format!("sr-{}", self.sampler.as_str()),
            GraphConfig::Knn { .. } => self.sampler.as_str().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.graph {
            GraphConfig::Spatial { radius } if !(radius >= 1.0) || !radius.is_finite() => {
                return Err(Error::param(format!("spatial radius must be >= 1, got {radius}")))
            }
            GraphConfig::Knn { k: Some(0) } => return Err(Error::param("graph k must be >= 1")),
            _ => {}
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::param(format!("sigma must be > 0, got {s}")));
            }
        }
        if self.m == Some(0) {
            return Err(Error::param("eigenpair count must be >= 1"));
        }
        if self.kde_k == 0 {
            return Err(Error::param("KDE neighbor count must be >= 1"));
        }
        if self.budget == 0 {
            return Err(Error::param("query budget must be >= 1"));
        }
        if !(0.5..1.0).contains(&self.consensus_threshold) {
            return Err(Error::param(format!(
                "consensus threshold must be in [0.5, 1), got {}",
                self.consensus_threshold
            )));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::param(format!(
                "noise variance must be >= 0, got {}",
                self.noise_variance
            )));
        }
        if self.modes == Some(0) {
            return Err(Error::param("mode count must be >= 1"));
        }
        Ok(())
    }
}

/// Wall time of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

struct Clock {
    start: Instant,
    last: Instant,
    stages: Vec<StageTime>,
}

impl Clock {
    fn new() -> Self {
        let now = Instant::now();
        Clock { start: now, last: now, stages: Vec::new() }
    }

    fn lap(&mut self, stage: &str) {
        let now = Instant::now();
        self.stages.push(StageTime { stage: stage.to_string(), seconds: (now - self.last).as_secs_f64() });
        self.last = now;
    }

    fn total(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}

/// Everything computed before any label is queried.
#[derive(Debug, Clone)]
pub struct Geometry {
    pub cube: ImageCube,
    pub eigenvalues: Vec<f64>,
    pub matvecs: usize,
    pub embedding: Embedding,
    pub density: DensityProfile,
    pub rho: RhoProfile,
    /// Diffusion nearest neighbors of every point.
    pub neighbors: NeighborTable,
    pub timings: Vec<StageTime>,
    pub seconds: f64,
}

/// Noise, graph, diffusion embedding, density and `rho`.
pub fn prepare(cube: &ImageCube, config: &PipelineConfig) -> Result<Geometry> {
    config.validate()?;
    let mut clock = Clock::new();
    let n = cube.len();
    if n < 2 {
        return Err(Error::param("the pipeline needs at least two pixels"));
    }
    let cube = inject_noise(cube, config.noise_variance, seed::split(config.seed, seed::NOISE))
        .map_err(|e| e.in_stage("noise"))?;
    clock.lap("noise");

    let affinity = match config.graph {
        GraphConfig::Spatial { radius } => build_spatial_affinity(&cube, radius, config.sigma),
        GraphConfig::Knn { k } => {
            build_spectral_affinity(&cube, k.unwrap_or_else(|| default_graph_k(n)), config.sigma)
        }
    }
    .map_err(|e| e.in_stage("graph"))?;
    let chain = to_markov(affinity).map_err(|e| e.in_stage("graph"))?;
    clock.lap("graph");

    let m = config.m.unwrap_or_else(|| default_eigen_count(n)).min(n);
    let model = top_eigenpairs(&chain, m, &EigenConfig::default()).map_err(|e| e.in_stage("spectral"))?;
    drop(chain);
    let embedding = model.embed(config.t);
    clock.lap("spectral");

    let density = estimate_density(&cube, config.kde_k).map_err(|e| e.in_stage("density"))?;
    clock.lap("density");

    let neighbors = embedding.knn_table(default_search_width(n));
    let rho = compute_rho_with(&embedding, &density, &neighbors).map_err(|e| e.in_stage("modes"))?;
    clock.lap("rho");

    Ok(Geometry {
        eigenvalues: model.eigenvalues().to_vec(),
        matvecs: model.matvecs(),
        cube,
        embedding,
        density,
        rho,
        neighbors,
        seconds: clock.total(),
        timings: clock.stages,
    })
}

/// One row of an experiment table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    /// Spectral bands actually used, as loaded.
    pub bands: usize,
    pub variant: String,
    pub radius: Option<f64>,
    pub graph_k: Option<usize>,
    pub t: u32,
    pub m: usize,
    pub kde_k: usize,
    pub budget: usize,
    pub budget_used: usize,
    pub seed: u64,
    pub overall_accuracy: f64,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub seconds: f64,
    pub coverage_warning: Option<String>,
    pub modes: usize,
    pub deferred: usize,
    pub rho_fallbacks: usize,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("run records always serialize")
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub record: RunRecord,
    pub metrics: Metrics,
    pub map: LabelMap,
    pub seeds: LabeledSet,
    pub queries: Vec<Query>,
    pub modes: ModeSet,
    pub timings: Vec<StageTime>,
}

fn default_mode_count(config: &PipelineConfig, truth: &GroundTruth, n: usize) -> usize {
    let classes = truth.classes().len();
    config.modes.unwrap_or(config.budget + 2 * classes).clamp(2.min(n), n)
}

/// Modes, queries, propagation and scoring on prepared geometry.
pub fn finish(geometry: &Geometry, truth: &GroundTruth, config: &PipelineConfig, dataset: &str) -> Result<PipelineOutput> {
    config.validate()?;
    truth.check_matches(&geometry.cube)?;
    let mut clock = Clock::new();
    let n = geometry.cube.len();
    let mut oracle = Oracle::new(truth);

    let mut count = default_mode_count(config, truth, n);
    let mut modes = detect_modes(&geometry.density, &geometry.rho, count).map_err(|e| e.in_stage("modes"))?;
    if config.sampler == Sampler::Core && config.modes.is_none() {
        // Unlabeled pixels among the top modes are skipped, so rank more modes
        // until the budget can be met.
        while answerable_modes(&modes, &oracle) < config.budget && count < n {
            count = (2 * count).min(n);
            modes = detect_modes(&geometry.density, &geometry.rho, count).map_err(|e| e.in_stage("modes"))?;
        }
    }
    clock.lap("modes");

    let seeds = match config.sampler {
        Sampler::Core => sample_core(&modes, config.budget, &mut oracle, config.ensure_coverage),
        Sampler::Boundary => sample_boundary(&geometry.embedding, &modes, config.budget, &mut oracle),
        Sampler::Random => sample_random(config.budget, &mut oracle, seed::split(config.seed, seed::SAMPLER)),
    }
    .map_err(|e| e.in_stage("sampling"))?;
    if let Some(w) = seeds.coverage_warning() {
        log::info!("{w}");
    }
    clock.lap("sampling");

    let consensus = match config.graph {
        GraphConfig::Spatial { radius } => Consensus::ball(
            SpatialBall::new(geometry.cube.grid(), radius).map_err(|e| e.in_stage("labeling"))?,
            config.consensus_threshold,
        )
        .map_err(|e| e.in_stage("labeling"))?,
        GraphConfig::Knn { .. } => Consensus::Off,
    };
    let map = two_stage_label_with(&seeds, &geometry.density, &geometry.embedding, &consensus, &geometry.neighbors)
        .map_err(|e| e.in_stage("labeling"))?;
    clock.lap("labeling");

    let metrics = evaluate(map.labels(), truth).map_err(|e| e.in_stage("metrics"))?;
    clock.lap("metrics");

    let record = RunRecord {
        dataset: dataset.to_string(),
        bands: geometry.cube.bands(),
        variant: config.variant(),
        radius: match config.graph {
            GraphConfig::Spatial { radius } => Some(radius),
            GraphConfig::Knn { .. } => None,
        },
        graph_k: match config.graph {
            GraphConfig::Spatial { .. } => None,
            GraphConfig::Knn { k } => Some(k.unwrap_or_else(|| default_graph_k(n))),
        },
        t: config.t,
        m: geometry.embedding.m(),
        kde_k: geometry.density.k(),
        budget: config.budget,
        budget_used: seeds.len(),
        seed: config.seed,
        overall_accuracy: metrics.overall_accuracy,
        average_accuracy: metrics.average_accuracy,
        kappa: metrics.kappa,
        seconds: geometry.seconds + clock.total(),
        coverage_warning: seeds.coverage_warning(),
        modes: modes.len(),
        deferred: map.deferred(),
        rho_fallbacks: geometry.rho.fallbacks,
    };
    let mut timings = geometry.timings.clone();
    timings.extend(clock.stages);
    Ok(PipelineOutput {
        record,
        metrics,
        map,
        queries: oracle.log().to_vec(),
        seeds,
        modes,
        timings,
    })
}

/// `prepare` followed by `finish`.
pub fn run_pipeline(cube: &ImageCube, truth: &GroundTruth, config: &PipelineConfig, dataset: &str) -> Result<PipelineOutput> {
    truth.check_matches(cube)?;
    let geometry = prepare(cube, config)?;
    finish(&geometry, truth, config, dataset)
}
