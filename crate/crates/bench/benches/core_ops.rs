//! Benchmarks for the numeric hot paths: sphere geometry, the consistency
//! loss, network passes, the KSG estimator, and a full training epoch.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use hcr_core::data::{make_sphere_blobs, stratified_split, AugmentSpec};
use hcr_core::diffnet::{
    backward, forward, init_params, Activation, NetworkConfig, OptimizerConfig, UpstreamGradients,
};
use hcr_core::geometry::{pairwise_distances, sample_uniform_sphere};
use hcr_core::losses::{hcr_loss, GradientFlow, HcrConfig, UnsupervisedKind};
use hcr_core::theory::{correlated_gaussians, ksg_mutual_information};
use hcr_core::trainer::{train, Precision, TrainConfig};

fn bench_geometry(c: &mut Criterion) {
    let batch = sample_uniform_sphere(128, 32, 7);
    c.bench_function("pairwise_distances_128x32", |b| {
        b.iter(|| pairwise_distances(black_box(&batch)))
    });
}

fn bench_consistency_loss(c: &mut Criterion) {
    let d_g = pairwise_distances(&sample_uniform_sphere(128, 4, 11));
    let d_h = pairwise_distances(&sample_uniform_sphere(128, 16, 12));
    let cfg = HcrConfig {
        gradient_flow: GradientFlow::Both,
        ..HcrConfig::default()
    };
    c.bench_function("hcr_loss_128", |b| {
        b.iter(|| hcr_loss(black_box(&d_g), black_box(&d_h), &cfg).unwrap())
    });
}

fn bench_network_passes(c: &mut Criterion) {
    let net = NetworkConfig {
        input_dim: 32,
        encoder_widths: vec![64],
        feature_dim: 32,
        num_classes: 4,
        projection_dim: 16,
        activation: Activation::Tanh,
    };
    let params = init_params(&net, 3).unwrap();
    let ds = make_sphere_blobs(4, 32, 32, 25.0, 5).unwrap();
    c.bench_function("forward_128", |b| {
        b.iter(|| forward(&net, &params, black_box(&ds.features)).unwrap())
    });
    let record = forward(&net, &params, &ds.features).unwrap();
    // Any dense upstream signal exercises the same code path; the logits
    // themselves have the right shape.
    let upstream = UpstreamGradients {
        logits: Some(record.logits.clone()),
        ..UpstreamGradients::default()
    };
    c.bench_function("backward_128", |b| {
        b.iter(|| backward(&net, &params, black_box(&record), &upstream).unwrap())
    });
}

fn bench_mutual_information(c: &mut Criterion) {
    let (x, y) = correlated_gaussians(500, 0.8, 21);
    c.bench_function("ksg_mi_500", |b| {
        b.iter(|| ksg_mutual_information(black_box(&x), black_box(&y), 5).unwrap())
    });
}

fn bench_training_epoch(c: &mut Criterion) {
    let ds = make_sphere_blobs(4, 32, 50, 25.0, 9).unwrap();
    let (train_ds, test_ds) = stratified_split(&ds, 0.2, 10).unwrap();
    let cfg = TrainConfig {
        network: NetworkConfig {
            input_dim: 32,
            encoder_widths: vec![64],
            feature_dim: 32,
            num_classes: 4,
            projection_dim: 16,
            activation: Activation::Tanh,
        },
        hcr: HcrConfig::default(),
        tau: 0.07,
        lambda_u: 1.0,
        unsupervised_kind: UnsupervisedKind::InfoNce,
        optimizer: OptimizerConfig {
            learning_rate: 0.03,
            momentum: 0.9,
        },
        batch_size: 64,
        epochs: 1,
        seed: 0,
        precision: Precision::Float64,
        augment: AugmentSpec::default(),
    };
    let mut group = c.benchmark_group("trainer");
    group.sample_size(10);
    group.bench_function("epoch_160x32_full_objective", |b| {
        b.iter(|| train(&cfg, black_box(&train_ds), &test_ds).unwrap())
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_geometry,
    bench_consistency_loss,
    bench_network_passes,
    bench_mutual_information,
    bench_training_epoch
);
criterion_main!(benches);
