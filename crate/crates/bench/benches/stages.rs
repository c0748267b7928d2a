use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use wpd_bench::{dihedral, sphere};
use wpd::cloud::{compute_bbox, voxel_length, voxelize};
use wpd::feature::{detect_edges_covariance, DEFAULT_DETECT_K, DEFAULT_DETECT_TAU};
use wpd::metrics;
use wpd::poisson::{estimate_radius, refine_count, RefineOptions, DEFAULT_LAMBDA};
use wpd::smooth::{smooth_pass, trim_to_exact_count, DEFAULT_SMOOTH_K};
use wpd::{resample, ResampleConfig, SpatialIndex};

fn spatial_index(c: &mut Criterion) {
    let cloud = sphere(100_000);
    c.bench_function("index/build 100k", |b| {
        b.iter(|| SpatialIndex::build(black_box(&cloud.points)).unwrap())
    });
    let index = SpatialIndex::build(&cloud.points).unwrap();
    c.bench_function("index/knn16 x 10k", |b| {
        b.iter(|| {
            for i in (0..cloud.len()).step_by(10) {
                black_box(index.knn_of(i, 16).unwrap());
            }
        })
    });
}

fn poisson(c: &mut Criterion) {
    let mut group = c.benchmark_group("poisson");
    group.sample_size(10);
    for input in [50_000, 200_000] {
        let cloud = sphere(input);
        let bbox = compute_bbox(&cloud).unwrap();
        let grid = voxelize(&cloud, voxel_length(&bbox, 0.05).unwrap()).unwrap();
        let n = input / 10;
        let est = estimate_radius(&grid, n, DEFAULT_LAMBDA).unwrap();
        group.bench_with_input(BenchmarkId::new("voxelize", input), &cloud, |b, cloud| {
            b.iter(|| voxelize(cloud, grid.l_v).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("refine_count", input), &cloud, |b, cloud| {
            b.iter(|| refine_count(cloud, n, &est, &RefineOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn smoothing(c: &mut Criterion) {
    let mut group = c.benchmark_group("smooth");
    group.sample_size(10);
    let cloud = sphere(22_000);
    group.bench_function("trim 22k->20k", |b| b.iter(|| trim_to_exact_count(&cloud, 20_000).unwrap()));
    let sub = trim_to_exact_count(&cloud, 20_000).unwrap();
    group.bench_function("pass 20k", |b| {
        b.iter(|| smooth_pass(&sub.points, DEFAULT_SMOOTH_K, None).unwrap())
    });
    group.finish();
}

fn features_and_metrics(c: &mut Criterion) {
    let mut group = c.benchmark_group("analysis");
    group.sample_size(10);
    let cloud = dihedral(50_000);
    group.bench_function("detect_edges 50k", |b| {
        b.iter(|| detect_edges_covariance(&cloud, DEFAULT_DETECT_K, DEFAULT_DETECT_TAU).unwrap())
    });
    let sub = sphere(10_000);
    let full = sphere(100_000);
    group.bench_function("hausdorff 10k->100k", |b| b.iter(|| metrics::hausdorff(&sub, &full, false).unwrap()));
    group.bench_function("uniformity 10k", |b| b.iter(|| metrics::uniformity_report(&sub, 6, true).unwrap()));
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut group = c.benchmark_group("pipeline");
    group.sample_size(10);
    let cloud = sphere(50_000);
    group.bench_function("resample 50k->5k", |b| {
        b.iter(|| resample(&cloud, &ResampleConfig::new(5_000)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, spatial_index, poisson, smoothing, features_and_metrics, pipeline);
criterion_main!(benches);
