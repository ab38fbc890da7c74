//! Statistical and cross-module properties on seeded synthetic scenes.

use srland::dataset::{load_npy_cube, load_npy_ground_truth, synthesize_scene, write_npy_cube, write_npy_labels};
use srland::eval::pipeline::{finish, prepare};
use srland::eval::run_pipeline;
use srland::graph::SpatialBall;
use srland::labeling::{two_stage_label_with, Consensus, DEFAULT_CONSENSUS_THRESHOLD};
use srland::modes::detect_modes;
use srland::{GraphConfig, GroundTruth, Grid, PipelineConfig, Sampler, SceneSpec};

fn two_blobs(seed: u64) -> SceneSpec {
    SceneSpec { height: 16, width: 16, bands: 8, classes: 2, separation: 10.0, smoothness: 1, seed }
}

/// Short-range graph with a long diffusion time, so the walk crosses a
/// 16-pixel region.
fn desk(seed: u64) -> PipelineConfig {
    PipelineConfig { graph: GraphConfig::Spatial { radius: 1.0 }, t: 1000, budget: 2, seed, ..PipelineConfig::default() }
}

fn disagreeing_pairs(grid: Grid, labels: &[u32]) -> usize {
    let mut count = 0;
    for r in 0..grid.height {
        for c in 0..grid.width {
            let i = grid.index(r, c);
            if c + 1 < grid.width && labels[i] != labels[grid.index(r, c + 1)] {
                count += 1;
            }
            if r + 1 < grid.height && labels[i] != labels[grid.index(r + 1, c)] {
                count += 1;
            }
        }
    }
    count
}

#[test]
fn top_two_modes_split_two_blobs() {
    for seed in 0..50 {
        let (cube, truth) = synthesize_scene(&two_blobs(seed)).unwrap();
        let geometry = prepare(&cube, &desk(seed)).unwrap();
        let modes = detect_modes(&geometry.density, &geometry.rho, 2).unwrap();
        let [a, b] = modes.modes() else { panic!("two modes expected") };
        assert_ne!(truth.labels()[*a], truth.labels()[*b], "seed {seed}");
    }
}

/// Aggregate over the scenes: a single map can come out a few pairs rougher
/// when a veto redirects later propagation.
#[test]
fn consensus_smooths_label_maps() {
    let mut with_total = 0;
    let mut without_total = 0;
    for seed in 0..50 {
        let spec = SceneSpec { height: 24, width: 24, bands: 6, classes: 3, separation: 4.0, smoothness: 2, seed };
        let (cube, truth) = synthesize_scene(&spec).unwrap();
        let config = PipelineConfig { budget: 6, seed, ..PipelineConfig::default() };
        let geometry = prepare(&cube, &config).unwrap();
        let seeds = finish(&geometry, &truth, &config, "smooth").unwrap().seeds;
        let ball = SpatialBall::new(cube.grid(), 3.0).unwrap();
        let on = Consensus::ball(ball, DEFAULT_CONSENSUS_THRESHOLD).unwrap();
        let smooth = two_stage_label_with(&seeds, &geometry.density, &geometry.embedding, &on, &geometry.neighbors).unwrap();
        let plain = two_stage_label_with(&seeds, &geometry.density, &geometry.embedding, &Consensus::Off, &geometry.neighbors).unwrap();
        let (with, without) = (disagreeing_pairs(cube.grid(), smooth.labels()), disagreeing_pairs(cube.grid(), plain.labels()));
        with_total += with;
        without_total += without;
    }
    assert!(with_total <= without_total, "{with_total} > {without_total}");
}

#[test]
fn samplers_skip_unlabeled_ground_truth_and_log_every_query() {
    for seed in 0..20u64 {
        let spec = SceneSpec { height: 14, width: 14, bands: 5, classes: 3, separation: 6.0, smoothness: 2, seed };
        let (cube, full) = synthesize_scene(&spec).unwrap();
        // Blank out every third pixel of the ground truth.
        let masked: Vec<u32> = full.labels().iter().enumerate().map(|(i, &l)| if i % 3 == 0 { 0 } else { l }).collect();
        let truth = GroundTruth::new(14, 14, masked).unwrap();
        for sampler in [Sampler::Core, Sampler::Boundary, Sampler::Random] {
            let config = PipelineConfig { sampler, budget: 5, ensure_coverage: sampler == Sampler::Core, seed, ..PipelineConfig::default() };
            let out = run_pipeline(&cube, &truth, &config, "masked").unwrap();
            assert!(out.queries.iter().all(|q| truth.labels()[q.index] > 0), "{sampler:?} seed {seed}");
            assert_eq!(out.queries.len(), out.record.budget_used);
            assert_eq!(out.seeds.len(), out.record.budget_used);
            assert!(!out.map.labels().contains(&0));
        }
    }
}

#[test]
fn pipeline_on_npy_files_matches_in_memory_run() {
    let dir = tempfile::tempdir().unwrap();
    let (cube, truth) = synthesize_scene(&two_blobs(7)).unwrap();
    let (cube_path, gt_path) = (dir.path().join("cube.npy"), dir.path().join("gt.npy"));
    write_npy_cube(&cube_path, &cube).unwrap();
    write_npy_labels(&gt_path, truth.grid(), truth.labels()).unwrap();
    let (loaded, loaded_truth) = (load_npy_cube(&cube_path).unwrap(), load_npy_ground_truth(&gt_path).unwrap());
    assert_eq!(loaded, cube);
    assert_eq!(loaded_truth, truth);

    let config = PipelineConfig { budget: 3, ..PipelineConfig::default() };
    let a = run_pipeline(&cube, &truth, &config, "mem").unwrap();
    let b = run_pipeline(&loaded, &loaded_truth, &config, "mem").unwrap();
    assert_eq!(a.map, b.map);
    assert_eq!(a.queries, b.queries);
}
