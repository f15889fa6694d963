//! Deterministic training loop for the composite objective, plus evaluation
//! and the distance-consistency diagnostic.
//!
//! One master [`ChaCha8Rng`] (from `TrainConfig::seed`) mints sub-seeds in a
//! fixed order: parameter init first, then per epoch one shuffle seed, then
//! per batch two augmentation seeds (view 1, view 2). Every consumer owns
//! its generator, so runs are bit-reproducible in float64 and two configs
//! that perform the same draws stay in lockstep.
//!
//! Each batch sees two augmented views. View 1 drives the classifier
//! (cross-entropy on the labeled subset), the sphere-projected logits, and
//! the projection-head queries; view 2 supplies the contrastive keys.
//! Pseudo-labels for the grouped contrastive term are the row argmax of
//! view 1's logits, with no confidence threshold.

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{augment, AugmentSpec, DataError, LabeledDataset};
use crate::diffnet::{
    backward, forward, forward_logits, init_params, sgd_momentum_step, NetError, NetworkConfig,
    NetworkParams, OptimizerConfig, OptimizerState, UpstreamGradients,
};
use crate::geometry::{
    distance_histogram, pairwise_distances, project_to_sphere, project_to_sphere_backward,
    GeometryError, Histogram,
};
use crate::losses::{
    composite_loss, CompositeConfig, CompositeInputs, HcrConfig, InputSlot, LossError,
    UnsupervisedKind,
};
use crate::numfmt::format_f64;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Arithmetic emulation mode. `Float32` stores parameters and optimizer
/// state in single precision (rounded through `f32` after initialization
/// and after every step) while keeping the arithmetic itself in f64;
/// `Float64` is the bit-reproducibility contract the tests pin down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    Float32,
    Float64,
}

/// Full training-run configuration. `hcr.weight == 0` disables the
/// regularizer: the HCR computation is skipped, not multiplied by zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub network: NetworkConfig,
    pub hcr: HcrConfig,
    pub tau: f64,
    pub lambda_u: f64,
    pub unsupervised_kind: UnsupervisedKind,
    pub optimizer: OptimizerConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    pub augment: AugmentSpec,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.network.validate()?;
        self.optimizer.validate()?;
        self.augment.validate()?;
        self.composite().validate()?;
        if self.batch_size == 0 {
            return Err(TrainError::ConfigError("batch_size must be positive".into()));
        }
        // The pairwise structure needs pairs; require room for a few.
        if self.hcr.weight > 0.0 && self.batch_size < 4 {
            return Err(TrainError::ConfigError(format!(
                "batch_size must be at least 4 when the consistency term is active, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }

    fn composite(&self) -> CompositeConfig {
        CompositeConfig {
            lambda_u: self.lambda_u,
            unsupervised: self.unsupervised_kind,
            tau: self.tau,
            hcr: self.hcr.clone(),
        }
    }
}

/// Per-epoch training metrics. `loss_*` are means over the epoch's
/// processed batches, accuracies are measured on clean (un-augmented)
/// features against the true labels, and `ks_statistic` is the
/// distance-consistency diagnostic on the first `min(256, N)` training rows
/// (0 when the training set has fewer than 8 rows and the diagnostic is
/// undefined).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub loss_s: f64,
    pub loss_u: f64,
    pub loss_hcr: f64,
    pub loss_total: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    pub ks_statistic: f64,
}

/// Header of the metrics CSV stream.
pub const METRICS_CSV_HEADER: &str =
    "epoch,loss_s,loss_u,loss_hcr,loss_total,train_acc,test_acc,ks";

/// Serializes metrics with 17-significant-digit decimals, so equal runs
/// produce byte-identical files.
pub fn metrics_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch,
            format_f64(r.loss_s),
            format_f64(r.loss_u),
            format_f64(r.loss_hcr),
            format_f64(r.loss_total),
            format_f64(r.train_acc),
            format_f64(r.test_acc),
            format_f64(r.ks_statistic),
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: NetworkParams,
    pub metrics: Vec<MetricsRecord>,
}

/// Rows used for the per-epoch distance-consistency diagnostic.
const KS_EVAL_ROWS: usize = 256;

/// Runs the training loop and returns the final parameters plus one
/// [`MetricsRecord`] per epoch. `epochs == 0` returns the freshly
/// initialized parameters and no metrics.
pub fn train(
    cfg: &TrainConfig,
    train_ds: &LabeledDataset,
    test_ds: &LabeledDataset,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    train_ds.validate()?;
    test_ds.validate()?;
    if train_ds.len() < 2 {
        return Err(TrainError::ConfigError(format!(
            "training set needs at least 2 rows, got {}",
            train_ds.len()
        )));
    }
    if test_ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    for (name, ds) in [("train", train_ds), ("test", test_ds)] {
        if ds.dim() != cfg.network.input_dim {
            return Err(TrainError::ConfigError(format!(
                "{name} features have dimension {} but the network expects {}",
                ds.dim(),
                cfg.network.input_dim
            )));
        }
        if ds.num_classes != cfg.network.num_classes {
            return Err(TrainError::ConfigError(format!(
                "{name} set has {} classes but the network expects {}",
                ds.num_classes, cfg.network.num_classes
            )));
        }
    }

    let composite_cfg = cfg.composite();
    let quantized = cfg.precision == Precision::Float32;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init_seed: u64 = master.random();
    let mut params = init_params(&cfg.network, init_seed)?;
    let mut opt_state = OptimizerState::new(&cfg.network)?;
    if quantized {
        quantize_params(&mut params);
    }

    let n = train_ds.len();
    let ks_rows = n.min(KS_EVAL_ROWS);
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let shuffle_seed: u64 = master.random();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));

        let mut sums = [0.0f64; 4];
        let mut processed = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            // Two seeds per batch slot, drawn even for skipped batches, so
            // the seed stream depends only on the dataset and batch size.
            let view1_seed: u64 = master.random();
            let view2_seed: u64 = master.random();
            if chunk.len() < 2 {
                continue; // no pairs, no contrastive diagonal: skip
            }
            let batch = train_ds.subset(chunk);
            let view1 = augment(&batch.features, &cfg.augment, view1_seed)?;
            let view2 = augment(&batch.features, &cfg.augment, view2_seed)?;
            let rec1 = forward(&cfg.network, &params, &view1)?;
            let rec2 = forward(&cfg.network, &params, &view2)?;
            let sphere_logits = project_to_sphere(&rec1.logits)?;
            let pseudo_labels = argmax_rows(&rec1.logits);
            let inputs = CompositeInputs {
                logits: &rec1.logits,
                sphere_logits: &sphere_logits,
                queries: &rec1.projections,
                keys: &rec2.projections,
            };
            let comp = composite_loss(
                &inputs,
                &batch.observed_labels,
                &batch.labeled_mask,
                &pseudo_labels,
                &composite_cfg,
            )?;

            // Route the sphere-projected-logits gradient back through the
            // normalization onto the raw logits.
            let mut grad_logits = comp
                .total
                .gradient(InputSlot::Logits)
                .cloned()
                .unwrap_or_else(|| Array2::zeros(rec1.logits.dim()));
            if let Some(g) = comp.total.gradient(InputSlot::SphereLogits) {
                grad_logits += &project_to_sphere_backward(&rec1.logits, g)?;
            }
            let up1 = UpstreamGradients {
                logits: Some(grad_logits),
                projections: comp.total.gradient(InputSlot::Queries).cloned(),
                features: None,
            };
            let mut grads = backward(&cfg.network, &params, &rec1, &up1)?;
            if let Some(grad_keys) = comp.total.gradient(InputSlot::Keys) {
                let up2 = UpstreamGradients {
                    projections: Some(grad_keys.clone()),
                    ..UpstreamGradients::default()
                };
                grads.add_assign(&backward(&cfg.network, &params, &rec2, &up2)?);
            }
            sgd_momentum_step(&mut params, &grads, &mut opt_state, &cfg.optimizer)?;
            if quantized {
                quantize_params(&mut params);
                quantize_params(&mut opt_state.velocity);
            }

            sums[0] += comp.supervised;
            sums[1] += comp.unsupervised;
            sums[2] += comp.hcr;
            sums[3] += comp.total.value;
            processed += 1;
        }
        if processed == 0 {
            return Err(TrainError::ConfigError(
                "every batch was smaller than 2 rows; nothing to train on".into(),
            ));
        }
        let scale = 1.0 / processed as f64;
        let ks_statistic = if ks_rows >= 8 {
            let rows = train_ds.features.slice(s![..ks_rows, ..]).to_owned();
            distance_consistency(&cfg.network, &params, &rows)?.ks_statistic
        } else {
            0.0
        };
        metrics.push(MetricsRecord {
            epoch,
            loss_s: sums[0] * scale,
            loss_u: sums[1] * scale,
            loss_hcr: sums[2] * scale,
            loss_total: sums[3] * scale,
            train_acc: evaluate(&cfg.network, &params, train_ds)?,
            test_acc: evaluate(&cfg.network, &params, test_ds)?,
            ks_statistic,
        });
    }
    Ok(TrainOutput { params, metrics })
}

fn quantize_params(params: &mut NetworkParams) {
    for layer in params.layers_mut() {
        layer.weight.mapv_inplace(|v| v as f32 as f64);
        layer.bias.mapv_inplace(|v| v as f32 as f64);
    }
}

/// Row argmax with ties broken by the lowest index.
fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Fraction of examples whose predicted class (logit argmax, ties to the
/// lowest index) matches the true label.
pub fn evaluate(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    ds: &LabeledDataset,
) -> Result<f64, TrainError> {
    if ds.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    ds.validate()?;
    let logits = forward_logits(cfg, params, &ds.features)?;
    let correct = argmax_rows(&logits)
        .iter()
        .zip(&ds.true_labels)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

/// Distance-structure comparison between the two heads on one batch.
#[derive(Debug, Clone)]
pub struct DistanceConsistency {
    /// Pairwise distances of the sphere-projected logits, 50 bins over [0,2].
    pub hist_g: Histogram,
    /// Pairwise distances of the projection-head outputs, same binning.
    pub hist_h: Histogram,
    /// Two-sample Kolmogorov-Smirnov statistic between the two distance
    /// samples (strict upper triangles).
    pub ks_statistic: f64,
}

const CONSISTENCY_BINS: usize = 50;

/// Compares the classifier's and the projection head's pairwise distance
/// distributions on `batch` (at least 8 rows, so the upper triangle has a
/// meaningful number of pairs).
pub fn distance_consistency(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    batch: &Array2<f64>,
) -> Result<DistanceConsistency, TrainError> {
    if batch.nrows() < 8 {
        return Err(TrainError::ConfigError(format!(
            "distance consistency needs at least 8 rows, got {}",
            batch.nrows()
        )));
    }
    let record = forward(cfg, params, batch)?;
    let sphere_logits = project_to_sphere(&record.logits)?;
    let d_g = pairwise_distances(&sphere_logits);
    let d_h = pairwise_distances(&record.projections);
    let ks_statistic = two_sample_ks(&d_g.upper_triangle(), &d_h.upper_triangle());
    Ok(DistanceConsistency {
        hist_g: distance_histogram(&d_g, CONSISTENCY_BINS, None),
        hist_h: distance_histogram(&d_h, CONSISTENCY_BINS, None),
        ks_statistic,
    })
}

/// Two-sample Kolmogorov-Smirnov statistic: the supremum gap between the
/// empirical CDFs. Handles ties by advancing both sides past each distinct
/// value. Panics on empty samples; values must be finite.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    assert!(
        !a.is_empty() && !b.is_empty(),
        "KS statistic needs non-empty samples"
    );
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut sup = 0.0f64;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] == t {
            i += 1;
        }
        while j < b.len() && b[j] == t {
            j += 1;
        }
        sup = sup.max((i as f64 / n - j as f64 / m).abs());
    }
    // Once one side is exhausted its ECDF sits at 1, and the gap only
    // shrinks as the other side catches up, so the sweep above saw the sup.
    sup
}
