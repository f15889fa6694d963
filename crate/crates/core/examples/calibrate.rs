//! Regenerates the measurements behind the frozen bounds in
//! `src/tolerances.rs`. Run with `cargo run --release -p hcr-core
//! --example calibrate`. The printed statistics are quoted in that module's
//! comments; bounds are only ever changed together with a fresh run of this
//! program.

use hcr_core::data::{apply_noise, make_sphere_blobs, mask_labels, stratified_split, AugmentSpec, NoiseKind, NoiseSpec};
use hcr_core::diffnet::{Activation, NetworkConfig, OptimizerConfig};
use hcr_core::losses::{HcrConfig, UnsupervisedKind};
use hcr_core::theory::{gaussian_points, jl_distortion, jl_project};
use hcr_core::trainer::{train, Precision, TrainConfig};

fn jl_sweep() {
    println!("== JL distortion, N=100, source 256 ==");
    let mut maxima = Vec::new();
    for seed in 0..20u64 {
        let pts = gaussian_points(100, 256, seed);
        let proj = jl_project(&pts, 64, 10_000 + seed);
        let report = jl_distortion(&pts, &proj).unwrap();
        maxima.push(report.max_distortion_eps);
    }
    let mut sorted = maxima.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    println!("  per-seed max |ratio-1| at target 64:");
    for (i, m) in maxima.iter().enumerate() {
        println!("    seed {i:2}: {m:.4}");
    }
    println!(
        "  min {:.4}  median {:.4}  max {:.4}",
        sorted[0],
        0.5 * (sorted[9] + sorted[10]),
        sorted[19]
    );

    println!("  median distortion by target dim (seed 0 points):");
    let pts = gaussian_points(100, 256, 0);
    for target in [16usize, 32, 64, 128] {
        let proj = jl_project(&pts, target, 20_000 + target as u64);
        let report = jl_distortion(&pts, &proj).unwrap();
        println!("    target {target:3}: median {:.4}", report.median_distortion());
    }
}

fn benchmark_config(input_dim: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        network: NetworkConfig {
            input_dim,
            encoder_widths: vec![64],
            feature_dim: 32,
            num_classes: 4,
            projection_dim: 16,
            activation: Activation::Tanh,
        },
        hcr: HcrConfig {
            weight: 0.0,
            ..HcrConfig::default()
        },
        tau: 0.07,
        lambda_u: 1.0,
        unsupervised_kind: UnsupervisedKind::None,
        optimizer: OptimizerConfig {
            learning_rate: 0.03,
            momentum: 0.9,
        },
        batch_size: 64,
        epochs: 60,
        seed,
        precision: Precision::Float64,
        augment: AugmentSpec::default(),
    }
}

fn training_arms() {
    println!("== training arms: sphere blobs 4x250, dim 32, concentration 25 ==");
    let arms = ["ce_10pct", "ce_infonce_hcr_10pct", "ce_noisy40", "ce_hcr_noisy40"];
    let mut acc = vec![Vec::new(); 4];
    let mut ks = vec![Vec::new(); 4];
    let started = std::time::Instant::now();
    for s in 0..5u64 {
        let ds = make_sphere_blobs(4, 32, 250, 25.0, 1000 + s).unwrap();
        let (train_full, test) = stratified_split(&ds, 0.2, 2000 + s).unwrap();
        let masked = mask_labels(&train_full, 0.1, 3000 + s).unwrap();
        let noisy = apply_noise(
            &train_full,
            &NoiseSpec {
                kind: NoiseKind::Symmetric,
                rate: 0.4,
            },
            4000 + s,
        )
        .unwrap();

        for (arm, train_ds) in [(0usize, &masked), (1, &masked), (2, &noisy), (3, &noisy)] {
            let mut cfg = benchmark_config(32, s);
            match arm {
                1 => {
                    cfg.unsupervised_kind = UnsupervisedKind::InfoNce;
                    cfg.hcr.weight = 1.0;
                }
                3 => cfg.hcr.weight = 1.0,
                _ => {}
            }
            let out = train(&cfg, train_ds, &test).unwrap();
            let last = out.metrics.last().unwrap();
            acc[arm].push(last.test_acc);
            ks[arm].push(last.ks_statistic);
        }
    }
    println!("  total training time: {:.1?}", started.elapsed());
    for (i, name) in arms.iter().enumerate() {
        let mean_acc: f64 = acc[i].iter().sum::<f64>() / 5.0;
        let mean_ks: f64 = ks[i].iter().sum::<f64>() / 5.0;
        println!(
            "  {name:22} acc {:?} mean {mean_acc:.4} | ks {:?} mean {mean_ks:.4}",
            acc[i].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
            ks[i].iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        );
    }
    let wins = ks[3].iter().zip(&ks[2]).filter(|(h, b)| h < b).count();
    println!("  ks(hcr_noisy) < ks(noisy baseline) in {wins}/5 seeds");
}

fn noisy_arm_variants() {
    println!("== noisy-arm variants: 40% symmetric noise, full labels ==");
    use hcr_core::losses::GradientFlow;
    let variants: [(&str, f64, GradientFlow, usize); 4] = [
        ("w1_classifier_e60", 1.0, GradientFlow::ClassifierOnly, 60),
        ("w1_both_e60", 1.0, GradientFlow::Both, 60),
        ("w2_classifier_e60", 2.0, GradientFlow::ClassifierOnly, 60),
        ("w1_both_e100", 1.0, GradientFlow::Both, 100),
    ];
    for (name, weight, flow, epochs) in variants {
        let mut accs = Vec::new();
        let mut kss = Vec::new();
        let mut base_accs = Vec::new();
        let mut base_kss = Vec::new();
        for s in 0..5u64 {
            let ds = make_sphere_blobs(4, 32, 250, 25.0, 1000 + s).unwrap();
            let (train_full, test) = stratified_split(&ds, 0.2, 2000 + s).unwrap();
            let noisy = apply_noise(
                &train_full,
                &NoiseSpec {
                    kind: NoiseKind::Symmetric,
                    rate: 0.4,
                },
                4000 + s,
            )
            .unwrap();
            let mut base = benchmark_config(32, s);
            base.epochs = epochs;
            let out_b = train(&base, &noisy, &test).unwrap();
            base_accs.push(out_b.metrics.last().unwrap().test_acc);
            base_kss.push(out_b.metrics.last().unwrap().ks_statistic);
            let mut cfg = benchmark_config(32, s);
            cfg.epochs = epochs;
            cfg.hcr.weight = weight;
            cfg.hcr.gradient_flow = flow;
            let out = train(&cfg, &noisy, &test).unwrap();
            accs.push(out.metrics.last().unwrap().test_acc);
            kss.push(out.metrics.last().unwrap().ks_statistic);
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let wins = kss.iter().zip(&base_kss).filter(|(h, b)| h < b).count();
        println!(
            "  {name:20} hcr acc {:.4} vs base {:.4} (diff {:+.4}) | hcr ks {:.4} vs base {:.4}, wins {wins}/5",
            mean(&accs),
            mean(&base_accs),
            mean(&accs) - mean(&base_accs),
            mean(&kss),
            mean(&base_kss),
        );
    }
}

fn main() {
    jl_sweep();
    training_arms();
    noisy_arm_variants();
}
