//! Subcommand implementations. Each writes its files and a manifest into the
//! job's output directory.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use srland::dataset::{load_npy_cube, load_npy_ground_truth, synthesize_scene, write_npy_cube, write_npy_labels};
use srland::eval::experiments::{learning_curve, loglog_slope, radius_sweep, scaling_benchmark, write_csv};
use srland::eval::{evaluate, run_pipeline, Metrics};
use srland::export::{write_label_csv, write_ppm};
use srland::sampling::write_query_csv;
use srland::{GroundTruth, ImageCube, Result};

use crate::config::{Job, Manifest, RunConfig, MANIFEST_FILE};

/// What a finished job reports back to the caller.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: Manifest,
    /// One line for standard output.
    pub summary: String,
    /// Non-fatal notice for standard error.
    pub warning: Option<String>,
}

fn load(config: &RunConfig) -> Result<(ImageCube, GroundTruth)> {
    let cube = load_npy_cube(&config.input)?;
    let truth = load_npy_ground_truth(&config.gt)?;
    truth.check_matches(&cube)?;
    Ok((cube, truth))
}

fn write_table<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_csv(BufWriter::new(File::create(path)?), rows)
}

/// Runs a job and writes its manifest.
pub fn execute(job: &Job) -> Result<Outcome> {
    if let Job::Run { config } | Job::Curve { config, .. } | Job::Sweep { config, .. } = job {
        config.validate()?;
    }
    let dir = job.output_dir().to_path_buf();
    fs::create_dir_all(&dir)?;
    let start = Instant::now();
    let mut manifest = Manifest::new(job.clone());
    let mut warning = None;

    let summary = match job {
        Job::Synth { spec, .. } => {
            let (cube, truth) = synthesize_scene(spec)?;
            write_npy_cube(&dir.join("cube.npy"), &cube)?;
            write_npy_labels(&dir.join("gt.npy"), truth.grid(), truth.labels())?;
            write_ppm(&dir.join("gt.ppm"), truth.grid(), truth.labels())?;
            manifest.outputs = vec!["cube.npy".into(), "gt.npy".into(), "gt.ppm".into()];
            format!("{}x{}x{} scene with {} classes", cube.height(), cube.width(), cube.bands(), spec.classes)
        }
        Job::Run { config } => {
            let (cube, truth) = load(config)?;
            let out = run_pipeline(&cube, &truth, &config.pipeline, &config.dataset)?;
            let grid = cube.grid();
            write_npy_labels(&dir.join("labels.npy"), grid, out.map.labels())?;
            write_ppm(&dir.join("labels.ppm"), grid, out.map.labels())?;
            write_label_csv(&dir.join("labels.csv"), grid, &out.map)?;
            write_query_csv(&dir.join("queries.csv"), grid, &out.queries)?;
            let line = out.record.to_json_line();
            fs::write(dir.join("record.json"), format!("{line}\n"))?;
            manifest.outputs = ["labels.npy", "labels.ppm", "labels.csv", "queries.csv", "record.json"]
                .map(String::from)
                .to_vec();
            manifest.budget_used = Some(out.record.budget_used);
            manifest.timings = out.timings;
            warning = out.record.coverage_warning.clone();
            manifest.record = Some(out.record);
            line
        }
        Job::Curve { config, budgets, trials } => {
            let (cube, truth) = load(config)?;
            let rows = learning_curve(&cube, &truth, &config.pipeline, budgets, *trials, config.pipeline.seed, &config.dataset)?;
            write_table(&dir.join("curve.csv"), &rows)?;
            manifest.outputs = vec!["curve.csv".into()];
            format!("{} budgets written to {}", rows.len(), dir.join("curve.csv").display())
        }
        Job::Sweep { config, radii, trials } => {
            let (cube, truth) = load(config)?;
            let rows = radius_sweep(&cube, &truth, &config.pipeline, radii, *trials, config.pipeline.seed, &config.dataset)?;
            write_table(&dir.join("sweep.csv"), &rows)?;
            manifest.outputs = vec!["sweep.csv".into()];
            format!("{} radii written to {}", rows.len(), dir.join("sweep.csv").display())
        }
        Job::Bench { sizes, seed, .. } => {
            let rows = scaling_benchmark(sizes, *seed)?;
            write_table(&dir.join("bench.csv"), &rows)?;
            manifest.outputs = vec!["bench.csv".into()];
            match loglog_slope(&rows) {
                Some(slope) => format!("log-log slope {slope:.3} over {} sizes", rows.len()),
                None => format!("{} size(s) timed", rows.len()),
            }
        }
    };

    manifest.seconds = start.elapsed().as_secs_f64();
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(Outcome { manifest, summary, warning })
}

/// Scores a predicted label file against ground truth.
pub fn cmd_eval(predicted: &Path, truth: &Path) -> Result<Metrics> {
    let predicted = load_npy_ground_truth(predicted)?;
    let truth = load_npy_ground_truth(truth)?;
    if predicted.grid() != truth.grid() {
        return Err(srland::Error::Shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            predicted.grid().height,
            predicted.grid().width,
            truth.grid().height,
            truth.grid().width
        )));
    }
    evaluate(predicted.labels(), &truth)
}
