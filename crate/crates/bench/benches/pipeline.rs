use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use srland::density::estimate_density;
use srland::eigen::EigenConfig;
use srland::eval::pipeline::{finish, prepare};
use srland::graph::{build_spatial_affinity, to_markov};
use srland::modes::{compute_rho_with, default_search_width};
use srland::spectral::top_eigenpairs;
use srland::GraphConfig;
use srland_bench::fixture;

const N: usize = 4096;

fn stages(c: &mut Criterion) {
    let (cube, truth, config) = fixture(N);
    let GraphConfig::Spatial { radius } = config.graph else { unreachable!() };
    let m = config.m.unwrap();
    let chain = to_markov(build_spatial_affinity(&cube, radius, None).unwrap()).unwrap();
    let geometry = prepare(&cube, &config).unwrap();

    let mut group = c.benchmark_group("stages");
    group.sample_size(10);
    group.bench_function("graph", |b| {
        b.iter(|| to_markov(build_spatial_affinity(black_box(&cube), radius, None).unwrap()).unwrap())
    });
    group.bench_function("eigenpairs", |b| {
        b.iter(|| top_eigenpairs(black_box(&chain), m, &EigenConfig::default()).unwrap())
    });
    group.bench_function("density", |b| b.iter(|| estimate_density(black_box(&cube), config.kde_k).unwrap()));
    group.bench_function("rho", |b| {
        b.iter(|| {
            let table = geometry.embedding.knn_table(default_search_width(N));
            compute_rho_with(&geometry.embedding, &geometry.density, &table).unwrap()
        })
    });
    group.bench_function("modes_queries_labels", |b| {
        b.iter(|| finish(black_box(&geometry), &truth, &config, "bench").unwrap())
    });
    group.finish();
}

fn end_to_end(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    for n in [1024, 4096, 16384] {
        let (cube, truth, config) = fixture(n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| {
                let geometry = prepare(&cube, &config).unwrap();
                finish(&geometry, &truth, &config, "bench").unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, stages, end_to_end);
criterion_main!(benches);
