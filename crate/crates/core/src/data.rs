//! Datasets for the workbench: synthetic generators, CSV ingestion and
//! export, stratified label masking, label noise, and augmentation.
//!
//! A [`LabeledDataset`] always carries both `true_labels` (ground truth,
//! used for evaluation) and `observed_labels` (what the trainer sees, which
//! label noise corrupts), plus `labeled_mask` marking the rows whose
//! observed label is visible in the semi-supervised setting. Generators
//! return fully labeled, clean data; [`apply_noise`] and [`mask_labels`]
//! derive the corrupted and partially labeled variants from it.
//!
//! Every operation that draws randomness takes an explicit seed and owns its
//! generator, so pipelines are deterministic regardless of call order.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::sample_uniform_sphere;
use crate::numfmt::format_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("parse error at data row {row}, column {column}: {message}")]
    ParseError {
        row: usize,
        column: String,
        message: String,
    },
    #[error("{0} contains no data rows")]
    EmptyFile(String),
    #[error("class {class} has {count} examples; labeling proportion {proportion} rounds to zero of them")]
    ProportionTooSmall {
        class: usize,
        count: usize,
        proportion: f64,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Features plus ground-truth and observed labels and the visibility mask.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Array2<f64>,
    pub true_labels: Vec<usize>,
    pub observed_labels: Vec<usize>,
    pub labeled_mask: Vec<bool>,
    pub num_classes: usize,
}

impl LabeledDataset {
    /// Fully labeled, clean dataset: observed = true, everything visible.
    pub fn fully_labeled(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Self {
        let n = labels.len();
        Self {
            features,
            observed_labels: labels.clone(),
            true_labels: labels,
            labeled_mask: vec![true; n],
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.true_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.true_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let n = self.features.nrows();
        if self.true_labels.len() != n
            || self.observed_labels.len() != n
            || self.labeled_mask.len() != n
        {
            return Err(DataError::InvalidInput(format!(
                "inconsistent lengths: {n} feature rows, {} true labels, {} observed, {} mask",
                self.true_labels.len(),
                self.observed_labels.len(),
                self.labeled_mask.len()
            )));
        }
        if self.num_classes == 0 {
            return Err(DataError::InvalidInput("num_classes is zero".into()));
        }
        for (&t, &o) in self.true_labels.iter().zip(&self.observed_labels) {
            if t >= self.num_classes || o >= self.num_classes {
                return Err(DataError::InvalidInput(format!(
                    "label out of range: true {t}, observed {o}, {} classes",
                    self.num_classes
                )));
            }
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidInput("non-finite feature value".into()));
        }
        Ok(())
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.labeled_mask.iter().all(|&m| m)
    }

    /// Examples per class, by true label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_classes];
        for &t in &self.true_labels {
            counts[t] += 1;
        }
        counts
    }

    /// Row subset in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Array2::zeros((indices.len(), self.dim()));
        for (k, &i) in indices.iter().enumerate() {
            features.row_mut(k).assign(&self.features.row(i));
        }
        Self {
            features,
            true_labels: indices.iter().map(|&i| self.true_labels[i]).collect(),
            observed_labels: indices.iter().map(|&i| self.observed_labels[i]).collect(),
            labeled_mask: indices.iter().map(|&i| self.labeled_mask[i]).collect(),
            num_classes: self.num_classes,
        }
    }
}

/// Gaussian blobs on the unit sphere: class centers drawn uniformly on
/// S^{dim-1}, each sample re-normalized after adding isotropic noise with
/// variance `1/concentration`. Larger concentration means tighter classes.
/// Rows are class-major: class 0 first.
pub fn make_sphere_blobs(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    concentration: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(DataError::InvalidInput(
            "classes, dimension, and per-class count must be positive".into(),
        ));
    }
    if concentration.is_nan() || concentration <= 0.0 {
        return Err(DataError::InvalidInput(format!(
            "concentration must be positive, got {concentration}"
        )));
    }
    let centers = sample_uniform_sphere(num_classes, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let noise = Normal::new(0.0, (1.0 / concentration).sqrt()).expect("positive sd");
    let n = num_classes * per_class;
    let mut features = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for c in 0..num_classes {
        for i in 0..per_class {
            let row_idx = c * per_class + i;
            let mut row = features.row_mut(row_idx);
            for (k, v) in row.iter_mut().enumerate() {
                *v = centers.values()[[c, k]] + noise.sample(&mut rng);
            }
            let norm = row.dot(&row).sqrt();
            // The center is unit length, so the sum cannot vanish unless the
            // noise exactly cancels it; renormalize unconditionally.
            row.mapv_inplace(|v| v / norm);
            labels.push(c);
        }
    }
    Ok(LabeledDataset::fully_labeled(features, labels, num_classes))
}

/// Standard deviation of the radial jitter added to shell samples.
const SHELL_JITTER_SD: f64 = 0.05;

/// Concentric shells: class `c` lives on the sphere of radius `1 + 0.5·c`
/// with small isotropic jitter. Radially separable, so linear classifiers
/// on raw features struggle while a small MLP does not.
pub fn make_shell_dataset(
    num_classes: usize,
    dim: usize,
    per_class: usize,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    if num_classes == 0 || per_class == 0 || dim == 0 {
        return Err(DataError::InvalidInput(
            "classes, dimension, and per-class count must be positive".into(),
        ));
    }
    let directions = sample_uniform_sphere(num_classes * per_class, dim, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let jitter = Normal::new(0.0, SHELL_JITTER_SD).expect("positive sd");
    let mut features = directions.into_values();
    let mut labels = Vec::with_capacity(num_classes * per_class);
    for c in 0..num_classes {
        let radius = 1.0 + 0.5 * c as f64;
        for i in 0..per_class {
            let mut row = features.row_mut(c * per_class + i);
            for v in row.iter_mut() {
                *v = *v * radius + jitter.sample(&mut rng);
            }
            labels.push(c);
        }
    }
    Ok(LabeledDataset::fully_labeled(features, labels, num_classes))
}

/// A loaded CSV dataset plus the original label values: `label_values[k]`
/// is the raw label that was re-indexed to class `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCsv {
    pub dataset: LabeledDataset,
    pub label_values: Vec<i64>,
}

/// Columns with reserved meaning in the export schema.
const RESERVED_COLUMNS: [&str; 3] = ["true_label", "observed_label", "labeled"];

/// Loads a CSV dataset. The header row is required. `label_column` names the
/// integer ground-truth label column; every other numeric column is a
/// feature, except the reserved columns `observed_label` (defaults to the
/// true label when absent) and `labeled` (0/1 mask, defaults to 1). Raw label
/// values are re-indexed densely to `0..num_classes` in sorted order, and
/// the mapping is returned.
pub fn load_csv_dataset(path: &Path, label_column: &str) -> Result<LoadedCsv, DataError> {
    let file_name = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| DataError::InvalidInput(format!("opening {file_name}: {e}")))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| DataError::InvalidInput(format!("reading header of {file_name}: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();

    let col_index = |name: &str| headers.iter().position(|h| h == name);
    let label_idx = col_index(label_column).ok_or_else(|| DataError::InvalidInput(format!(
        "{file_name} has no column named {label_column:?}"
    )))?;
    let observed_idx = col_index("observed_label").filter(|&i| i != label_idx);
    let mask_idx = col_index("labeled");
    let feature_idx: Vec<usize> = (0..headers.len())
        .filter(|&i| i != label_idx && !RESERVED_COLUMNS.contains(&headers[i].as_str()))
        .collect();
    if feature_idx.is_empty() {
        return Err(DataError::InvalidInput(format!(
            "{file_name} has no feature columns"
        )));
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_true: Vec<i64> = Vec::new();
    let mut raw_observed: Vec<i64> = Vec::new();
    let mut mask: Vec<bool> = Vec::new();
    for (row_num, record) in reader.records().enumerate() {
        let row = row_num + 1;
        let record = record.map_err(|e| DataError::ParseError {
            row,
            column: "<record>".into(),
            message: e.to_string(),
        })?;
        let field = |idx: usize| -> Result<&str, DataError> {
            record.get(idx).ok_or_else(|| DataError::ParseError {
                row,
                column: headers[idx].clone(),
                message: "missing field".into(),
            })
        };
        let mut features = Vec::with_capacity(feature_idx.len());
        for &fi in &feature_idx {
            let text = field(fi)?;
            features.push(text.trim().parse::<f64>().map_err(|e| DataError::ParseError {
                row,
                column: headers[fi].clone(),
                message: format!("{e}: {text:?}"),
            })?);
        }
        let parse_label = |idx: usize| -> Result<i64, DataError> {
            let text = field(idx)?;
            text.trim().parse::<i64>().map_err(|e| DataError::ParseError {
                row,
                column: headers[idx].clone(),
                message: format!("{e}: {text:?}"),
            })
        };
        let t = parse_label(label_idx)?;
        raw_true.push(t);
        raw_observed.push(match observed_idx {
            Some(oi) => parse_label(oi)?,
            None => t,
        });
        mask.push(match mask_idx {
            Some(mi) => {
                let text = field(mi)?.trim();
                match text {
                    "0" | "false" => false,
                    "1" | "true" => true,
                    other => {
                        return Err(DataError::ParseError {
                            row,
                            column: headers[mi].clone(),
                            message: format!("expected 0/1/true/false, got {other:?}"),
                        })
                    }
                }
            }
            None => true,
        });
        rows.push(features);
    }
    if rows.is_empty() {
        return Err(DataError::EmptyFile(file_name));
    }

    // Dense re-indexing over the union of true and observed label values.
    let mut mapping: BTreeMap<i64, usize> = BTreeMap::new();
    for &v in raw_true.iter().chain(raw_observed.iter()) {
        mapping.entry(v).or_default();
    }
    let label_values: Vec<i64> = mapping.keys().copied().collect();
    for (k, v) in label_values.iter().enumerate() {
        mapping.insert(*v, k);
    }

    let dim = feature_idx.len();
    let mut features = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }
    let dataset = LabeledDataset {
        features,
        true_labels: raw_true.iter().map(|v| mapping[v]).collect(),
        observed_labels: raw_observed.iter().map(|v| mapping[v]).collect(),
        labeled_mask: mask,
        num_classes: label_values.len(),
    };
    dataset.validate()?;
    Ok(LoadedCsv {
        dataset,
        label_values,
    })
}

/// Serializes a dataset to the export schema: feature columns `f0..f{d-1}`,
/// then `true_label,observed_label,labeled`. Floats carry 17 significant
/// digits, so write → load round-trips the exact feature bits.
pub fn dataset_to_csv(ds: &LabeledDataset) -> String {
    let dim = ds.dim();
    let mut out = String::new();
    for j in 0..dim {
        out.push_str(&format!("f{j},"));
    }
    out.push_str("true_label,observed_label,labeled\n");
    for i in 0..ds.len() {
        for j in 0..dim {
            out.push_str(&format_f64(ds.features[[i, j]]));
            out.push(',');
        }
        out.push_str(&format!(
            "{},{},{}\n",
            ds.true_labels[i],
            ds.observed_labels[i],
            u8::from(ds.labeled_mask[i])
        ));
    }
    out
}

/// Writes the export schema to a file.
pub fn write_csv_dataset(ds: &LabeledDataset, path: &Path) -> Result<(), DataError> {
    std::fs::write(path, dataset_to_csv(ds))
        .map_err(|e| DataError::InvalidInput(format!("writing {}: {e}", path.display())))
}

/// Hides labels outside a stratified subset: exactly `round(proportion·N_c)`
/// examples of each class keep `labeled_mask = true`, selected by a seeded
/// shuffle. Requires a fully labeled input.
pub fn mask_labels(
    ds: &LabeledDataset,
    proportion: f64,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    ds.validate()?;
    if !ds.is_fully_labeled() {
        return Err(DataError::InvalidInput(
            "mask_labels expects a fully labeled dataset".into(),
        ));
    }
    if !(proportion > 0.0 && proportion <= 1.0) {
        return Err(DataError::InvalidInput(format!(
            "proportion must lie in (0, 1], got {proportion}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    out.labeled_mask = vec![false; ds.len()];
    for class in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.true_labels[i] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let keep = (proportion * members.len() as f64).round() as usize;
        if keep == 0 {
            return Err(DataError::ProportionTooSmall {
                class,
                count: members.len(),
                proportion,
            });
        }
        members.shuffle(&mut rng);
        for &i in members.iter().take(keep) {
            out.labeled_mask[i] = true;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Flip with probability `rate` to a uniformly random *different* class.
    Symmetric,
    /// Flip with probability `rate` to the cyclically next class.
    Asymmetric,
    /// Flip probability proportional to how ambiguous the example is
    /// (small margin between its two nearest class centers), targeting the
    /// second-nearest center's class. Expected flip fraction ≈ `rate`.
    InstanceDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
}

/// Corrupts `observed_labels` while preserving `true_labels` and features.
/// Requires a fully labeled dataset (noise is applied before masking).
pub fn apply_noise(
    ds: &LabeledDataset,
    spec: &NoiseSpec,
    seed: u64,
) -> Result<LabeledDataset, DataError> {
    ds.validate()?;
    if !ds.is_fully_labeled() {
        return Err(DataError::InvalidInput(
            "apply_noise expects a fully labeled dataset".into(),
        ));
    }
    if !(0.0..=1.0).contains(&spec.rate) {
        return Err(DataError::InvalidInput(format!(
            "noise rate must lie in [0, 1], got {}",
            spec.rate
        )));
    }
    if ds.num_classes < 2 {
        return Err(DataError::InvalidInput(
            "label noise needs at least 2 classes".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ds.clone();
    match spec.kind {
        NoiseKind::Symmetric => {
            for i in 0..ds.len() {
                if rng.random_range(0.0..1.0) < spec.rate {
                    let t = ds.true_labels[i];
                    let mut draw = rng.random_range(0..ds.num_classes - 1);
                    if draw >= t {
                        draw += 1;
                    }
                    out.observed_labels[i] = draw;
                }
            }
        }
        NoiseKind::Asymmetric => {
            for i in 0..ds.len() {
                if rng.random_range(0.0..1.0) < spec.rate {
                    out.observed_labels[i] = (ds.true_labels[i] + 1) % ds.num_classes;
                }
            }
        }
        NoiseKind::InstanceDependent => {
            let centers = class_centers(ds);
            let n = ds.len();
            // Ambiguity weight a_i = exp(-margin_i) with margin the gap
            // between the two nearest class-center distances.
            let mut weights = Vec::with_capacity(n);
            let mut second_class = Vec::with_capacity(n);
            for i in 0..n {
                let mut dists: Vec<(f64, usize)> = (0..ds.num_classes)
                    .map(|c| {
                        let diff = &ds.features.row(i) - &centers.row(c);
                        (diff.dot(&diff).sqrt(), c)
                    })
                    .collect();
                dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
                weights.push((-(dists[1].0 - dists[0].0)).exp());
                second_class.push(dists[1].1);
            }
            let total: f64 = weights.iter().sum();
            for i in 0..n {
                let p = (spec.rate * n as f64 * weights[i] / total).clamp(0.0, 1.0);
                if rng.random_range(0.0..1.0) < p {
                    out.observed_labels[i] = second_class[i];
                }
            }
        }
    }
    Ok(out)
}

/// Per-class feature means (by true label). Classes without members keep a
/// zero center.
fn class_centers(ds: &LabeledDataset) -> Array2<f64> {
    let mut centers = Array2::zeros((ds.num_classes, ds.dim()));
    let counts = ds.class_counts();
    for i in 0..ds.len() {
        let c = ds.true_labels[i];
        let mut row = centers.row_mut(c);
        row += &ds.features.row(i);
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            let mut row = centers.row_mut(c);
            row /= count as f64;
        }
    }
    centers
}

/// Augmentation: per-row uniform scaling plus iid Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentSpec {
    pub scale_range: (f64, f64),
    pub jitter_sigma: f64,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            scale_range: (0.8, 1.25),
            jitter_sigma: 0.1,
        }
    }
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(DataError::InvalidInput(format!(
                "scale range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
        if self.jitter_sigma < 0.0 || !self.jitter_sigma.is_finite() {
            return Err(DataError::InvalidInput(format!(
                "jitter sigma must be nonnegative, got {}",
                self.jitter_sigma
            )));
        }
        Ok(())
    }
}

/// Applies one augmented view: each row is scaled by `s ~ U[lo, hi]` and
/// then shifted by iid `N(0, jitter_sigma²)` noise. Deterministic per seed;
/// the scale is drawn before the jitter, row by row.
pub fn augment(
    features: &Array2<f64>,
    spec: &AugmentSpec,
    seed: u64,
) -> Result<Array2<f64>, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = spec.scale_range;
    let jitter = if spec.jitter_sigma > 0.0 {
        Some(Normal::new(0.0, spec.jitter_sigma).expect("positive sd"))
    } else {
        None
    };
    let mut out = features.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let scale = if hi > lo { rng.random_range(lo..hi) } else { lo };
        for v in row.iter_mut() {
            *v *= scale;
            if let Some(j) = &jitter {
                *v += j.sample(&mut rng);
            }
        }
    }
    Ok(out)
}

/// Deterministic stratified split: per class, `round(test_fraction·N_c)`
/// rows go to the test side after a seeded shuffle.
pub fn stratified_split(
    ds: &LabeledDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset), DataError> {
    ds.validate()?;
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::InvalidInput(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in 0..ds.num_classes {
        let mut members: Vec<usize> = (0..ds.len())
            .filter(|&i| ds.true_labels[i] == class)
            .collect();
        members.shuffle(&mut rng);
        let take = (test_fraction * members.len() as f64).round() as usize;
        test_idx.extend(members.iter().take(take));
        train_idx.extend(members.iter().skip(take));
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(DataError::InvalidInput(format!(
            "split with fraction {test_fraction} left one side empty"
        )));
    }
    Ok((ds.subset(&train_idx), ds.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn blobs_are_deterministic_unit_norm_and_class_major() {
        let a = make_sphere_blobs(3, 8, 10, 25.0, 5).unwrap();
        let b = make_sphere_blobs(3, 8, 10, 25.0, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 30);
        assert!(a.is_fully_labeled());
        for i in 0..30 {
            assert_eq!(a.true_labels[i], i / 10);
            let row = a.features.row(i);
            assert_abs_diff_eq!(row.dot(&row).sqrt(), 1.0, epsilon = 1e-12);
        }
        assert_ne!(a, make_sphere_blobs(3, 8, 10, 25.0, 6).unwrap());
    }

    #[test]
    fn blobs_are_nearest_centroid_separable() {
        let ds = make_sphere_blobs(4, 32, 250, 25.0, 7).unwrap();
        let centers = class_centers(&ds);
        let mut correct = 0;
        for i in 0..ds.len() {
            let mut best = (f64::INFINITY, 0);
            for c in 0..4 {
                let diff = &ds.features.row(i) - &centers.row(c);
                let d = diff.dot(&diff);
                if d < best.0 {
                    best = (d, c);
                }
            }
            if best.1 == ds.true_labels[i] {
                correct += 1;
            }
        }
        let acc = correct as f64 / ds.len() as f64;
        assert!(acc > 0.95, "nearest-centroid accuracy {acc}");
    }

    #[test]
    fn shells_have_ordered_radii() {
        let ds = make_shell_dataset(3, 6, 50, 11).unwrap();
        let mut mean_norms = [0.0; 3];
        for i in 0..ds.len() {
            let row = ds.features.row(i);
            mean_norms[ds.true_labels[i]] += row.dot(&row).sqrt() / 50.0;
        }
        assert_abs_diff_eq!(mean_norms[0], 1.0, epsilon = 0.1);
        assert_abs_diff_eq!(mean_norms[1], 1.5, epsilon = 0.1);
        assert_abs_diff_eq!(mean_norms[2], 2.0, epsilon = 0.1);
        assert!(mean_norms[0] < mean_norms[1] && mean_norms[1] < mean_norms[2]);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds = make_sphere_blobs(2, 5, 8, 10.0, 3).unwrap();
        let noisy = apply_noise(
            &ds,
            &NoiseSpec {
                kind: NoiseKind::Symmetric,
                rate: 0.5,
            },
            9,
        )
        .unwrap();
        let masked = mask_labels(&noisy, 0.5, 10).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.csv");
        write_csv_dataset(&masked, &path).unwrap();
        let loaded = load_csv_dataset(&path, "true_label").unwrap();
        assert_eq!(loaded.dataset, masked);
        assert_eq!(loaded.label_values, vec![0, 1]);
    }

    #[test]
    fn csv_labels_reindex_densely_with_mapping() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sparse.csv");
        std::fs::write(&path, "x,y,label\n0.5,1.0,7\n1.5,-1.0,3\n0.25,0.0,7\n").unwrap();
        let loaded = load_csv_dataset(&path, "label").unwrap();
        assert_eq!(loaded.label_values, vec![3, 7]);
        assert_eq!(loaded.dataset.true_labels, vec![1, 0, 1]);
        assert_eq!(loaded.dataset.num_classes, 2);
        assert_eq!(loaded.dataset.features[[1, 0]], 1.5);
        assert!(loaded.dataset.is_fully_labeled());
    }

    #[test]
    fn csv_parse_errors_carry_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "x,y,label\n0.5,1.0,0\n0.5,oops,1\n").unwrap();
        match load_csv_dataset(&path, "label") {
            Err(DataError::ParseError { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "y");
            }
            other => panic!("expected ParseError, got {other:?}"),
        }

        let empty = dir.path().join("empty.csv");
        std::fs::write(&empty, "x,y,label\n").unwrap();
        assert!(matches!(
            load_csv_dataset(&empty, "label"),
            Err(DataError::EmptyFile(_))
        ));

        assert!(matches!(
            load_csv_dataset(&path, "missing"),
            Err(DataError::InvalidInput(_))
        ));
    }

    #[test]
    fn mask_labels_is_exactly_stratified() {
        let ds = make_sphere_blobs(4, 6, 250, 25.0, 1).unwrap();
        let masked = mask_labels(&ds, 0.1, 2).unwrap();
        let labeled = masked.labeled_mask.iter().filter(|&&m| m).count();
        assert_eq!(labeled, 100);
        for class in 0..4 {
            let count = (0..masked.len())
                .filter(|&i| masked.true_labels[i] == class && masked.labeled_mask[i])
                .count();
            assert_eq!(count, 25, "class {class}");
        }
        // Different seeds select different subsets of the same size.
        let other = mask_labels(&ds, 0.1, 3).unwrap();
        assert_ne!(masked.labeled_mask, other.labeled_mask);
        assert_eq!(masked, mask_labels(&ds, 0.1, 2).unwrap());
    }

    #[test]
    fn mask_labels_rejects_bad_inputs() {
        let ds = make_sphere_blobs(2, 4, 3, 25.0, 1).unwrap();
        assert!(matches!(
            mask_labels(&ds, 0.01, 1),
            Err(DataError::ProportionTooSmall { .. })
        ));
        assert!(mask_labels(&ds, 0.0, 1).is_err());
        assert!(mask_labels(&ds, 1.2, 1).is_err());
        let partial = mask_labels(&ds, 0.5, 1).unwrap();
        assert!(matches!(
            mask_labels(&partial, 0.5, 1),
            Err(DataError::InvalidInput(_))
        ));
    }

    #[test]
    fn symmetric_noise_hits_requested_rate() {
        let ds = make_sphere_blobs(4, 4, 2500, 25.0, 2).unwrap();
        let spec = NoiseSpec {
            kind: NoiseKind::Symmetric,
            rate: 0.5,
        };
        let noisy = apply_noise(&ds, &spec, 3).unwrap();
        assert_eq!(noisy.true_labels, ds.true_labels);
        assert_eq!(noisy.features, ds.features);
        let flipped = noisy
            .observed_labels
            .iter()
            .zip(&noisy.true_labels)
            .filter(|(o, t)| o != t)
            .count();
        let fraction = flipped as f64 / noisy.len() as f64;
        assert!(
            (fraction - 0.5).abs() < 0.02,
            "flip fraction {fraction} too far from 0.5"
        );
        assert_eq!(noisy, apply_noise(&ds, &spec, 3).unwrap());
    }

    #[test]
    fn asymmetric_noise_shifts_cyclically() {
        let ds = make_sphere_blobs(3, 4, 500, 25.0, 4).unwrap();
        let noisy = apply_noise(
            &ds,
            &NoiseSpec {
                kind: NoiseKind::Asymmetric,
                rate: 0.3,
            },
            5,
        )
        .unwrap();
        let mut flipped = 0;
        for i in 0..noisy.len() {
            if noisy.observed_labels[i] != noisy.true_labels[i] {
                assert_eq!(noisy.observed_labels[i], (noisy.true_labels[i] + 1) % 3);
                flipped += 1;
            }
        }
        let fraction = flipped as f64 / noisy.len() as f64;
        assert!((fraction - 0.3).abs() < 0.04, "flip fraction {fraction}");
    }

    #[test]
    fn instance_noise_prefers_ambiguous_points_and_matches_rate() {
        let ds = make_sphere_blobs(4, 16, 500, 10.0, 6).unwrap();
        let noisy = apply_noise(
            &ds,
            &NoiseSpec {
                kind: NoiseKind::InstanceDependent,
                rate: 0.2,
            },
            7,
        )
        .unwrap();
        let flipped = noisy
            .observed_labels
            .iter()
            .zip(&noisy.true_labels)
            .filter(|(o, t)| o != t)
            .count();
        let fraction = flipped as f64 / noisy.len() as f64;
        assert!(
            (fraction - 0.2).abs() < 0.05,
            "flip fraction {fraction} too far from 0.2"
        );
    }

    #[test]
    fn augment_displacement_matches_jitter_magnitude() {
        let ds = make_sphere_blobs(2, 32, 1000, 25.0, 8).unwrap();
        let spec = AugmentSpec {
            scale_range: (1.0, 1.0),
            jitter_sigma: 0.1,
        };
        let view = augment(&ds.features, &spec, 9).unwrap();
        let mut mean_disp = 0.0;
        for i in 0..ds.len() {
            let diff = &view.row(i) - &ds.features.row(i);
            mean_disp += diff.dot(&diff).sqrt() / ds.len() as f64;
        }
        let expected = 0.1 * (32.0_f64).sqrt();
        assert!(
            (mean_disp - expected).abs() < 0.15 * expected,
            "mean displacement {mean_disp}, expected ~{expected}"
        );
        assert_eq!(view, augment(&ds.features, &spec, 9).unwrap());
        assert_ne!(view, augment(&ds.features, &spec, 10).unwrap());
    }

    #[test]
    fn augment_pure_scaling_stays_in_range() {
        let ds = make_sphere_blobs(2, 8, 50, 25.0, 12).unwrap();
        let spec = AugmentSpec {
            scale_range: (0.8, 1.25),
            jitter_sigma: 0.0,
        };
        let view = augment(&ds.features, &spec, 13).unwrap();
        for i in 0..ds.len() {
            let norm_before = ds.features.row(i).dot(&ds.features.row(i)).sqrt();
            let norm_after = view.row(i).dot(&view.row(i)).sqrt();
            let scale = norm_after / norm_before;
            assert!((0.8..1.25).contains(&scale), "scale {scale} out of range");
        }
    }

    #[test]
    fn stratified_split_is_deterministic_and_balanced() {
        let ds = make_sphere_blobs(4, 6, 100, 25.0, 14).unwrap();
        let (train, test) = stratified_split(&ds, 0.2, 15).unwrap();
        assert_eq!(train.len(), 320);
        assert_eq!(test.len(), 80);
        assert_eq!(test.class_counts(), vec![20, 20, 20, 20]);
        let (train2, test2) = stratified_split(&ds, 0.2, 15).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }
}
