//! Experiment drivers: learning curves, radius sweeps and a scaling benchmark.

use std::io::Write;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{synthesize_scene, GroundTruth, ImageCube, SceneSpec};
use crate::error::{Error, Result};
use crate::eval::pipeline::{finish, prepare, GraphConfig, PipelineConfig, Sampler};
use crate::sampling::csv_error;
use crate::seed;

/// Mean and population standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregate of repeated runs at one setting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_oa: f64,
    pub std_oa: f64,
    pub mean_aa: f64,
    pub mean_kappa: f64,
    pub mean_budget_used: f64,
}

#[derive(Default)]
struct Acc {
    oa: Vec<f64>,
    aa: Vec<f64>,
    kappa: Vec<f64>,
    used: Vec<f64>,
}

impl Acc {
    fn push(&mut self, r: &crate::eval::pipeline::RunRecord) {
        self.oa.push(r.overall_accuracy);
        self.aa.push(r.average_accuracy);
        self.kappa.push(r.kappa);
        self.used.push(r.budget_used as f64);
    }

    fn summary(&self) -> Summary {
        let (mean_oa, std_oa) = mean_std(&self.oa);
        Summary {
            trials: self.oa.len(),
            mean_oa,
            std_oa,
            mean_aa: mean_std(&self.aa).0,
            mean_kappa: mean_std(&self.kappa).0,
            mean_budget_used: mean_std(&self.used).0,
        }
    }
}

/// Trials actually run: deterministic samplers run once.
pub fn effective_trials(sampler: Sampler, trials: usize) -> usize {
    if sampler.is_random() {
        trials.max(1)
    } else {
        1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub budget: usize,
    pub trials: usize,
    pub mean_oa: f64,
    pub std_oa: f64,
    pub mean_aa: f64,
    pub mean_kappa: f64,
    pub mean_budget_used: f64,
}

impl CurveRow {
    fn new(budget: usize, s: Summary) -> Self {
        CurveRow {
            budget,
            trials: s.trials,
            mean_oa: s.mean_oa,
            std_oa: s.std_oa,
            mean_aa: s.mean_aa,
            mean_kappa: s.mean_kappa,
            mean_budget_used: s.mean_budget_used,
        }
    }
}

/// Mean accuracy of `config`'s variant at each budget, ascending.
///
/// Trial `k` reruns noise and sampling from `seed::trial(seed, k)`; the
/// geometry is shared by every budget of a trial.
pub fn learning_curve(
    cube: &ImageCube,
    truth: &GroundTruth,
    config: &PipelineConfig,
    budgets: &[usize],
    trials: usize,
    root: u64,
    dataset: &str,
) -> Result<Vec<CurveRow>> {
    let mut budgets = budgets.to_vec();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.is_empty() {
        return Err(Error::param("learning curve needs at least one budget"));
    }
    let mut accs: Vec<Acc> = budgets.iter().map(|_| Acc::default()).collect();
    for k in 0..effective_trials(config.sampler, trials) {
        let trial = PipelineConfig { seed: seed::trial(root, k), ..config.clone() };
        let geometry = prepare(cube, &trial)?;
        for (acc, &budget) in accs.iter_mut().zip(&budgets) {
            let out = finish(&geometry, truth, &PipelineConfig { budget, ..trial.clone() }, dataset)?;
            acc.push(&out.record);
        }
    }
    Ok(budgets
        .into_iter()
        .zip(accs)
        .map(|(budget, acc)| CurveRow::new(budget, acc.summary()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub radius: f64,
    pub trials: usize,
    pub mean_oa: f64,
    pub std_oa: f64,
    pub mean_aa: f64,
    pub mean_kappa: f64,
    pub mean_budget_used: f64,
}

/// Spatially regularized core accuracy as a function of the spatial radius,
/// radii ascending.
pub fn radius_sweep(
    cube: &ImageCube,
    truth: &GroundTruth,
    config: &PipelineConfig,
    radii: &[f64],
    trials: usize,
    root: u64,
    dataset: &str,
) -> Result<Vec<SweepRow>> {
    let mut radii = radii.to_vec();
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    if radii.is_empty() {
        return Err(Error::param("radius sweep needs at least one radius"));
    }
    let mut rows = Vec::with_capacity(radii.len());
    for radius in radii {
        let mut acc = Acc::default();
        for k in 0..effective_trials(Sampler::Core, trials) {
            let run = PipelineConfig {
                graph: GraphConfig::Spatial { radius },
                sampler: Sampler::Core,
                seed: seed::trial(root, k),
                ..config.clone()
            };
            let geometry = prepare(cube, &run)?;
            acc.push(&finish(&geometry, truth, &run, dataset)?.record);
        }
        let s = acc.summary();
        rows.push(SweepRow {
            radius,
            trials: s.trials,
            mean_oa: s.mean_oa,
            std_oa: s.std_oa,
            mean_aa: s.mean_aa,
            mean_kappa: s.mean_kappa,
            mean_budget_used: s.mean_budget_used,
        });
    }
    Ok(rows)
}

/// Scene used for timing at `n` pixels.
///
/// Sixteen classes, each one Voronoi region, with means at least 20 apart in 4
/// bands, mapped into 16 bands by a fixed random isometry. The ambient
/// dimension is 16 while the intrinsic dimension stays 4, and the number of
/// clusters does not change with `n`; the regions simply get larger.
pub fn scaling_scene(n: usize, seed: u64) -> Result<(ImageCube, GroundTruth)> {
    const INTRINSIC: usize = 4;
    const AMBIENT: usize = 16;
    if n < 16 {
        return Err(Error::param(format!("scaling scene needs at least 16 pixels, got {n}")));
    }
    let mut height = (n as f64).sqrt() as usize;
    while n % height != 0 {
        height -= 1;
    }
    let (low, truth) = synthesize_scene(&SceneSpec {
        height,
        width: n / height,
        bands: INTRINSIC,
        classes: 16,
        separation: 20.0,
        smoothness: 1,
        seed,
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::split(seed, seed::SCENE));
    let gaussian = DMatrix::<f64>::from_fn(AMBIENT, INTRINSIC, |_, _| StandardNormal.sample(&mut rng));
    let lift = gaussian.qr().q();
    let mut values = Vec::with_capacity(n * AMBIENT);
    for i in 0..n {
        let x = low.point(i);
        values.extend((0..AMBIENT).map(|r| (0..INTRINSIC).map(|c| lift[(r, c)] * x[c]).sum::<f64>()));
    }
    Ok((ImageCube::new(height, n / height, AMBIENT, values)?, truth))
}

/// Pipeline settings for the timing runs at `n` pixels: radius 3, 20
/// eigenpairs, `ceil(log2 n)` density neighbors and 10 queries.
pub fn scaling_config(n: usize) -> PipelineConfig {
    PipelineConfig {
        graph: GraphConfig::Spatial { radius: 3.0 },
        m: Some(20),
        kde_k: (n as f64).log2().ceil() as usize,
        budget: 10,
        ..PipelineConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub n: usize,
    pub seconds: f64,
    pub matvecs: usize,
    pub rho_fallbacks: usize,
}

/// Full-pipeline wall time at each size, in the given order.
pub fn scaling_benchmark(sizes: &[usize], root: u64) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (cube, truth) = scaling_scene(n, seed::split(root, seed::SCENE))?;
        let config = PipelineConfig { seed: root, ..scaling_config(n) };
        let start = Instant::now();
        let geometry = prepare(&cube, &config)?;
        finish(&geometry, &truth, &config, "scaling")?;
        rows.push(ScalingRow {
            n,
            seconds: start.elapsed().as_secs_f64(),
            matvecs: geometry.matvecs,
            rho_fallbacks: geometry.rho.fallbacks,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `log(seconds)` against `log(n)`.
pub fn loglog_slope(rows: &[ScalingRow]) -> Option<f64> {
    if rows.len() < 2 {
        return None;
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.seconds.ln()).collect();
    let (mx, my) = (mean_std(&xs).0, mean_std(&ys).0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Rows as CSV with a header taken from the field names.
pub fn write_csv<W: Write, T: Serialize>(writer: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
