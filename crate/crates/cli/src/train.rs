//! `hcr train`: load a dataset, optionally corrupt and hide labels, train
//! the two-headed network, and write `metrics.csv` plus `checkpoint.json`.
//!
//! Configuration resolves in three layers: built-in defaults sized to the
//! dataset, then an optional `--config` JSON file replacing the whole
//! structure, then individual flag overrides. Data preparation draws its
//! seeds from the training seed (split = seed+1, noise = seed+2,
//! mask = seed+3) so one `--seed` value pins the entire run.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, ValueEnum};
use hcr_core::data::{
    apply_noise, load_csv_dataset, mask_labels, stratified_split, AugmentSpec, LabeledDataset,
    NoiseKind, NoiseSpec,
};
use hcr_core::diffnet::{save_checkpoint, Activation, NetworkConfig, OptimizerConfig};
use hcr_core::losses::{GradientFlow, HcrConfig, UnsupervisedKind};
use hcr_core::trainer::{metrics_to_csv, train, Precision, TrainConfig};

use crate::manifest::RunManifest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum NoiseKindArg {
    Symmetric,
    Asymmetric,
    InstanceDependent,
}

impl From<NoiseKindArg> for NoiseKind {
    fn from(v: NoiseKindArg) -> Self {
        match v {
            NoiseKindArg::Symmetric => NoiseKind::Symmetric,
            NoiseKindArg::Asymmetric => NoiseKind::Asymmetric,
            NoiseKindArg::InstanceDependent => NoiseKind::InstanceDependent,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum UnsupArg {
    None,
    InfoNce,
    Pgc,
}

impl From<UnsupArg> for UnsupervisedKind {
    fn from(v: UnsupArg) -> Self {
        match v {
            UnsupArg::None => UnsupervisedKind::None,
            UnsupArg::InfoNce => UnsupervisedKind::InfoNce,
            UnsupArg::Pgc => UnsupervisedKind::Pgc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum GradFlowArg {
    ClassifierOnly,
    Both,
}

impl From<GradFlowArg> for GradientFlow {
    fn from(v: GradFlowArg) -> Self {
        match v {
            GradFlowArg::ClassifierOnly => GradientFlow::ClassifierOnly,
            GradFlowArg::Both => GradientFlow::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum PrecisionArg {
    Float32,
    Float64,
}

impl From<PrecisionArg> for Precision {
    fn from(v: PrecisionArg) -> Self {
        match v {
            PrecisionArg::Float32 => Precision::Float32,
            PrecisionArg::Float64 => Precision::Float64,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training CSV (schema as written by `generate`).
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out CSV; when absent, a stratified split of --data is used.
    #[arg(long = "test-data")]
    pub test_data: Option<PathBuf>,
    /// Fraction moved to the test side when --test-data is absent.
    #[arg(long = "test-fraction", default_value_t = 0.2)]
    pub test_fraction: f64,
    /// Column holding the class label when loading plain CSVs.
    #[arg(long = "label-column", default_value = "true_label")]
    pub label_column: String,
    /// JSON file with a full training configuration; flags still override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Keep labels on this fraction of each class, hide the rest.
    #[arg(long = "label-proportion")]
    pub label_proportion: Option<f64>,
    /// Label-corruption model; requires --noise-rate.
    #[arg(long = "noise-kind", value_enum)]
    pub noise_kind: Option<NoiseKindArg>,
    /// Fraction of training labels to corrupt before masking.
    #[arg(long = "noise-rate")]
    pub noise_rate: Option<f64>,
    /// Consistency-term coefficient; 0 disables the term entirely.
    #[arg(long = "hcr-weight")]
    pub hcr_weight: Option<f64>,
    /// Unsupervised term.
    #[arg(long, value_enum)]
    pub unsup: Option<UnsupArg>,
    /// Contrastive temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Which head the consistency gradient reaches.
    #[arg(long = "grad-flow", value_enum)]
    pub grad_flow: Option<GradFlowArg>,
    /// Master seed for training and data preparation.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long = "batch-size")]
    pub batch_size: Option<usize>,
    /// Coefficient of the unsupervised term.
    #[arg(long = "lambda-u")]
    pub lambda_u: Option<f64>,
    /// Parameter storage precision.
    #[arg(long, value_enum)]
    pub precision: Option<PrecisionArg>,
    /// Output directory (default: $HCR_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Defaults sized to the dataset. Tanh rather than ReLU: with zero-
/// initialized biases a ReLU projection head can emit an exactly-zero row,
/// which the sphere map rejects.
fn default_config(input_dim: usize, num_classes: usize) -> TrainConfig {
    TrainConfig {
        network: NetworkConfig {
            input_dim,
            encoder_widths: vec![64],
            feature_dim: 32,
            num_classes,
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
        epochs: 60,
        seed: 0,
        precision: Precision::Float64,
        augment: AugmentSpec::default(),
    }
}

fn apply_overrides(cfg: &mut TrainConfig, args: &TrainArgs) {
    if let Some(w) = args.hcr_weight {
        cfg.hcr.weight = w;
    }
    if let Some(u) = args.unsup {
        cfg.unsupervised_kind = u.into();
    }
    if let Some(t) = args.tau {
        cfg.tau = t;
    }
    if let Some(g) = args.grad_flow {
        cfg.hcr.gradient_flow = g.into();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.lr {
        cfg.optimizer.learning_rate = lr;
    }
    if let Some(m) = args.momentum {
        cfg.optimizer.momentum = m;
    }
    if let Some(b) = args.batch_size {
        cfg.batch_size = b;
    }
    if let Some(l) = args.lambda_u {
        cfg.lambda_u = l;
    }
    if let Some(p) = args.precision {
        cfg.precision = p.into();
    }
}

pub fn run(args: &TrainArgs) -> anyhow::Result<()> {
    let dir = crate::resolve_out_dir(args.out.as_deref())?;

    let loaded = load_csv_dataset(&args.data, &args.label_column)
        .with_context(|| format!("loading {}", args.data.display()))?;
    let full = loaded.dataset;

    let mut cfg = match &args.config {
        Some(path) => {
            let body = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str::<TrainConfig>(&body)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => default_config(full.dim(), full.num_classes),
    };
    apply_overrides(&mut cfg, args);

    let seed = cfg.seed;
    let split_seed = seed.wrapping_add(1);
    let noise_seed = seed.wrapping_add(2);
    let mask_seed = seed.wrapping_add(3);

    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "test_data": args.test_data.as_ref().map(|p| p.display().to_string()),
            "label_column": args.label_column,
            "test_fraction": args.test_fraction,
            "label_proportion": args.label_proportion,
            "noise_kind": args.noise_kind.map(|k| serde_json::to_value(NoiseKind::from(k)).expect("serializes")),
            "noise_rate": args.noise_rate,
            "train_config": serde_json::to_value(&cfg)?,
        }),
    );
    manifest.seed("train", seed);

    let (mut train_ds, test_ds): (LabeledDataset, LabeledDataset) = match &args.test_data {
        Some(path) => {
            let held_out = load_csv_dataset(path, &args.label_column)
                .with_context(|| format!("loading {}", path.display()))?;
            (full, held_out.dataset)
        }
        None => {
            if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
                crate::usage_error("--test-fraction must lie strictly between 0 and 1");
            }
            manifest.seed("split", split_seed);
            stratified_split(&full, args.test_fraction, split_seed)?
        }
    };

    // Corrupt, then hide: noise models see every true label, and the test
    // side is never touched by either step.
    if let Some(rate) = args.noise_rate {
        let kind = args.noise_kind.map_or(NoiseKind::Symmetric, NoiseKind::from);
        manifest.seed("noise", noise_seed);
        train_ds = apply_noise(&train_ds, &NoiseSpec { kind, rate }, noise_seed)?;
    } else if args.noise_kind.is_some() {
        crate::usage_error("--noise-kind requires --noise-rate");
    }
    if let Some(proportion) = args.label_proportion {
        manifest.seed("mask", mask_seed);
        train_ds = mask_labels(&train_ds, proportion, mask_seed)?;
    }

    let labeled = train_ds.labeled_mask.iter().filter(|&&b| b).count();
    manifest
        .artifact("metrics", "metrics.csv")
        .artifact("checkpoint", "checkpoint.json")
        .stat("train_rows", train_ds.len())
        .stat("test_rows", test_ds.len())
        .stat("labeled_examples", labeled)
        .stat("classes", train_ds.num_classes);
    manifest.write(&dir)?;

    let output = train(&cfg, &train_ds, &test_ds)?;

    let metrics_path = dir.join("metrics.csv");
    std::fs::write(&metrics_path, metrics_to_csv(&output.metrics))
        .with_context(|| format!("writing {}", metrics_path.display()))?;
    let checkpoint_path = dir.join("checkpoint.json");
    save_checkpoint(&checkpoint_path, &cfg.network, &output.params)?;

    if let Some(last) = output.metrics.last() {
        println!(
            "epoch {}: train_acc {:.4} test_acc {:.4} ks {:.4}",
            last.epoch, last.train_acc, last.test_acc, last.ks_statistic
        );
    }
    println!("wrote {}", metrics_path.display());
    println!("wrote {}", checkpoint_path.display());
    Ok(())
}
