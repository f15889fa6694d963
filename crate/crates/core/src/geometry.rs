//! Unit-sphere batches, pairwise distances, and distance histograms.
//!
//! Both endpoints of the HCR coupling live on unit spheres: the classifier's
//! logits are projected onto S^{D_g-1} and the projection head already emits
//! points on S^{D_h-1}. Everything downstream (similarities, the regularizer,
//! the diagnostics) consumes the pairwise Euclidean distance structure of
//! those batches, so this module owns the two core types [`UnitSphereBatch`]
//! and [`DistanceMatrix`] plus their adjoints for reverse-mode gradients.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::numfmt::format_f64;

/// Norms below this are treated as zero vectors: no stable direction exists.
pub const MIN_PROJECTION_NORM: f64 = 1e-12;

/// Unit-row tolerance enforced by [`UnitSphereBatch::new`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("row {row} has norm {norm:.3e} below {MIN_PROJECTION_NORM:.0e}; no direction to project onto the sphere")]
    ZeroVector { row: usize, norm: f64 },
    #[error("row {row} has norm {norm} but unit-sphere rows must have norm within {UNIT_NORM_TOLERANCE:.0e} of 1")]
    NotUnitNorm { row: usize, norm: f64 },
    #[error("invalid distance matrix: {0}")]
    InvalidMatrix(String),
}

/// A batch of points on the unit sphere, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSphereBatch {
    values: Array2<f64>,
}

impl UnitSphereBatch {
    /// Validates that every row has L2 norm within `1e-6` of 1.
    pub fn new(values: Array2<f64>) -> Result<Self, GeometryError> {
        for (row, v) in values.axis_iter(Axis(0)).enumerate() {
            let norm = v.dot(&v).sqrt();
            if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(GeometryError::NotUnitNorm { row, norm });
            }
        }
        Ok(Self { values })
    }

    /// Skips the unit-norm check. The caller guarantees the rows are close
    /// enough to unit norm for their purpose; gradient-check harnesses use
    /// this to evaluate losses at finitely perturbed (slightly off-sphere)
    /// points, where the distance formula is still exact.
    pub fn new_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }
}

/// Projects each row of `features` onto the unit sphere by dividing by its
/// L2 norm. Idempotent up to roundoff.
pub fn project_to_sphere(features: &Array2<f64>) -> Result<UnitSphereBatch, GeometryError> {
    let mut out = features.clone();
    for (row, mut v) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = v.dot(&v).sqrt();
        if norm < MIN_PROJECTION_NORM {
            return Err(GeometryError::ZeroVector { row, norm });
        }
        v.mapv_inplace(|x| x / norm);
    }
    Ok(UnitSphereBatch::new_unchecked(out))
}

/// Adjoint of [`project_to_sphere`]: pulls a gradient w.r.t. the normalized
/// rows back to the raw rows.
///
/// For a raw row `v` with `u = v/||v||`, the Jacobian is `(I - u uᵀ)/||v||`,
/// so each output row is `(g - (u·g) u)/||v||`. The returned gradient is
/// orthogonal to `u` row by row (directions along `v` do not change `u`).
pub fn project_to_sphere_backward(
    raw: &Array2<f64>,
    grad_unit: &Array2<f64>,
) -> Result<Array2<f64>, GeometryError> {
    assert_eq!(raw.dim(), grad_unit.dim(), "raw/gradient shape mismatch");
    let mut out = Array2::zeros(raw.dim());
    for (row, (v, g)) in raw
        .axis_iter(Axis(0))
        .zip(grad_unit.axis_iter(Axis(0)))
        .enumerate()
    {
        let norm = v.dot(&v).sqrt();
        if norm < MIN_PROJECTION_NORM {
            return Err(GeometryError::ZeroVector { row, norm });
        }
        let u = v.mapv(|x| x / norm);
        let along = u.dot(&g);
        let mut o = out.row_mut(row);
        for i in 0..u.len() {
            o[i] = (g[i] - along * u[i]) / norm;
        }
    }
    Ok(out)
}

/// Symmetric pairwise Euclidean distance matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    values: Array2<f64>,
}

impl DistanceMatrix {
    /// Validates squareness, symmetry (to 1e-12), zero diagonal, and
    /// nonnegative entries.
    pub fn new(values: Array2<f64>) -> Result<Self, GeometryError> {
        let (r, c) = values.dim();
        if r != c {
            return Err(GeometryError::InvalidMatrix(format!(
                "expected a square matrix, got {r}x{c}"
            )));
        }
        for i in 0..r {
            if values[[i, i]] != 0.0 {
                return Err(GeometryError::InvalidMatrix(format!(
                    "diagonal entry ({i},{i}) is {} instead of 0",
                    values[[i, i]]
                )));
            }
            for j in (i + 1)..r {
                let (a, b) = (values[[i, j]], values[[j, i]]);
                if (a - b).abs() > 1e-12 {
                    return Err(GeometryError::InvalidMatrix(format!(
                        "asymmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                if a < 0.0 {
                    return Err(GeometryError::InvalidMatrix(format!(
                        "negative distance {a} at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self { values })
    }

    pub fn new_unchecked(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Number of points the matrix was built from.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Strict upper-triangle entries in row-major order: the n(n-1)/2
    /// per-pair distances, each pair counted once.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.len();
        let mut out = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.values[[i, j]]);
            }
        }
        out
    }
}

/// Pairwise Euclidean distances via the Gram matrix:
/// `d²(i,j) = <x_i,x_i> + <x_j,x_j> - 2<x_i,x_j>`, one matrix product instead
/// of an O(n²·dim) double loop. Tiny negative squared distances from rounding
/// are clamped to zero before the square root. For exactly unit rows this
/// reduces to `d² = 2 - 2<x_i,x_j>`.
pub fn pairwise_distances(batch: &UnitSphereBatch) -> DistanceMatrix {
    let x = batch.values();
    let n = batch.len();
    let gram = x.dot(&x.t());
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let sq = gram[[i, i]] + gram[[j, j]] - 2.0 * gram[[i, j]];
            let d = sq.max(0.0).sqrt();
            out[[i, j]] = d;
            out[[j, i]] = d;
        }
    }
    DistanceMatrix::new_unchecked(out)
}

/// Adjoint of [`pairwise_distances`].
///
/// `grad[[i, j]]` holds the loss derivative w.r.t. the unordered pair
/// distance `d(i,j)` (symmetric, zero diagonal). Returns the gradient w.r.t.
/// the batch rows: `∂L/∂x_i = Σ_j grad[[i,j]] · (x_i - x_j)/d(i,j)`.
/// Coincident pairs (`d = 0`) get a zero contribution; the HCR kernel's
/// derivative vanishes there anyway.
pub fn pairwise_distances_backward(
    batch: &UnitSphereBatch,
    distances: &DistanceMatrix,
    grad: &Array2<f64>,
) -> Array2<f64> {
    let x = batch.values();
    let n = batch.len();
    assert_eq!(distances.len(), n, "distance matrix size mismatch");
    assert_eq!(grad.dim(), (n, n), "gradient shape mismatch");
    let mut out = Array2::zeros(x.dim());
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distances.values()[[i, j]];
            if d <= 0.0 {
                continue;
            }
            let scale = grad[[i, j]] / d;
            for k in 0..x.ncols() {
                let diff = x[[i, k]] - x[[j, k]];
                out[[i, k]] += scale * diff;
                out[[j, k]] -= scale * diff;
            }
        }
    }
    out
}

/// Draws `n` points uniformly on S^{dim-1} by normalizing iid standard
/// Gaussian vectors. Deterministic per seed. The astronomically unlikely
/// near-zero draw is rejected and redrawn so the result is total.
pub fn sample_uniform_sphere(n: usize, dim: usize, seed: u64) -> UnitSphereBatch {
    assert!(dim >= 1, "dimension must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut values = Array2::<f64>::zeros((n, dim));
    for mut row in values.axis_iter_mut(Axis(0)) {
        loop {
            for v in row.iter_mut() {
                *v = normal.sample(&mut rng);
            }
            let norm = row.dot(&row).sqrt();
            if norm >= MIN_PROJECTION_NORM {
                row.mapv_inplace(|x| x / norm);
                break;
            }
        }
    }
    UnitSphereBatch::new_unchecked(values)
}

/// Fixed-width histogram of the strict upper triangle of a distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// `bins + 1` edges, evenly spaced over the range.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// CSV with header `bin_lo,bin_hi,count`, edges at full precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (k, count) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                format_f64(self.bin_edges[k]),
                format_f64(self.bin_edges[k + 1]),
                count
            ));
        }
        out
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Histograms the n(n-1)/2 pair distances into `bins` equal-width bins over
/// `range` (default `(0, 2)`, the full range on the unit sphere). Values
/// outside the range are clamped into the first or last bin, so the counts
/// always sum to the number of pairs.
pub fn distance_histogram(
    distances: &DistanceMatrix,
    bins: usize,
    range: Option<(f64, f64)>,
) -> Histogram {
    assert!(bins >= 1, "need at least one bin");
    let (lo, hi) = range.unwrap_or((0.0, 2.0));
    assert!(hi > lo, "histogram range must be nonempty");
    let width = (hi - lo) / bins as f64;
    let bin_edges: Vec<f64> = (0..=bins).map(|k| lo + k as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for d in distances.upper_triangle() {
        let raw = ((d - lo) / width).floor();
        let idx = (raw.max(0.0) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Histogram { bin_edges, counts }
}
