//! Empirical checks of the structural results behind the regularizer:
//! concentration of pairwise distances on the high-dimensional sphere,
//! distance preservation under Gaussian random projection, and invariance
//! of mutual information under well-conditioned linear reparametrization.
//!
//! Each check returns a serializable report; frozen pass/fail bounds live
//! with the consumers (the acceptance suite and the CLI verifier), not here.

use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::geometry::{pairwise_distances, sample_uniform_sphere};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("rows {i} and {j} of the original points coincide; distance ratios are undefined")]
    DuplicatePoints { i: usize, j: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Observed vs. predicted moments of pairwise distances between uniform
/// unit-sphere samples. In high dimension the distances concentrate around
/// √2 with variance ~ 1/(2·dim).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceStats {
    pub dim: usize,
    pub n_points: usize,
    pub mean: f64,
    pub variance: f64,
    pub predicted_mean: f64,
    pub predicted_variance: f64,
}

/// Samples `n_points` uniformly on S^{dim-1} and compares the
/// upper-triangle distance mean and (unbiased) variance against the
/// concentration predictions. The predictions are asymptotic in `dim`; low
/// dimensions return a report that simply disagrees with them.
pub fn check_distance_asymptotics(dim: usize, n_points: usize, seed: u64) -> DistanceStats {
    assert!(dim >= 2, "needs at least 2 dimensions, got {dim}");
    assert!(n_points >= 100, "needs at least 100 points for stable moments");
    let points = sample_uniform_sphere(n_points, dim, seed);
    let distances = pairwise_distances(&points).upper_triangle();
    let len = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / len;
    let variance = distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (len - 1.0);
    DistanceStats {
        dim,
        n_points,
        mean,
        variance,
        predicted_mean: std::f64::consts::SQRT_2,
        predicted_variance: 1.0 / (2.0 * dim as f64),
    }
}

/// Projects row points through a Gaussian random matrix with entries drawn
/// from N(0, 1/target_dim), the classical construction that preserves
/// squared distances in expectation.
pub fn jl_project(points: &Array2<f64>, target_dim: usize, seed: u64) -> Array2<f64> {
    assert!(target_dim >= 1, "target dimension must be positive");
    let source_dim = points.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (1.0 / target_dim as f64).sqrt();
    let map = Array2::from_shape_fn((source_dim, target_dim), |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        z * sd
    });
    points.dot(&map)
}

/// Pairs closer than this (squared) in the original space are rejected as
/// duplicates: their distance ratio is meaningless.
const DUPLICATE_SQ_TOLERANCE: f64 = 1e-24;

/// Per-pair squared-distance distortions of a projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlReport {
    pub source_dim: usize,
    pub target_dim: usize,
    pub n_points: usize,
    /// max over pairs of |ratio - 1|.
    pub max_distortion_eps: f64,
    /// |‖F(h_i)-F(h_j)‖²/‖h_i-h_j‖² - 1| per strict-upper-triangle pair,
    /// row-major.
    pub distortions: Vec<f64>,
}

impl JlReport {
    /// Median of the per-pair distortions (midpoint convention for even
    /// counts).
    pub fn median_distortion(&self) -> f64 {
        let mut sorted = self.distortions.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let n = sorted.len();
        if n == 0 {
            return f64::NAN;
        }
        if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        }
    }
}

/// Measures how far the projection strays from isometry on squared
/// distances. Rows must correspond; duplicate original rows are an error.
pub fn jl_distortion(
    original: &Array2<f64>,
    projected: &Array2<f64>,
) -> Result<JlReport, TheoryError> {
    let n = original.nrows();
    if projected.nrows() != n {
        return Err(TheoryError::InvalidInput(format!(
            "original has {n} rows but projected has {}",
            projected.nrows()
        )));
    }
    if n < 2 {
        return Err(TheoryError::InvalidInput(
            "need at least 2 points to form a pair".into(),
        ));
    }
    let mut distortions = Vec::with_capacity(n * (n - 1) / 2);
    let mut max_eps = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            let d_orig: f64 = original
                .row(i)
                .iter()
                .zip(original.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d_orig < DUPLICATE_SQ_TOLERANCE {
                return Err(TheoryError::DuplicatePoints { i, j });
            }
            let d_proj: f64 = projected
                .row(i)
                .iter()
                .zip(projected.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            let eps = (d_proj / d_orig - 1.0).abs();
            max_eps = max_eps.max(eps);
            distortions.push(eps);
        }
    }
    Ok(JlReport {
        source_dim: original.ncols(),
        target_dim: projected.ncols(),
        n_points: n,
        max_distortion_eps: max_eps,
        distortions,
    })
}

/// Nonparametric mutual-information estimate in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub k_neighbors: usize,
    pub n_samples: usize,
}

fn chebyshev(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max)
}

fn zero_spread(m: &Array2<f64>) -> bool {
    let first = m.row(0);
    m.rows().into_iter().all(|row| chebyshev(row, first) == 0.0)
}

/// k-nearest-neighbor mutual-information estimator (the first variant of
/// the Kraskov-Stögbauer-Grassberger family):
///
/// `I ≈ ψ(k) + ψ(N) − ⟨ψ(n_x+1) + ψ(n_y+1)⟩`
///
/// with Chebyshev (max-norm) balls. For each joint sample, `ε_i` is the
/// distance to its k-th neighbor in the joint space and `n_x`, `n_y` count
/// marginal neighbors strictly inside `ε_i`. Estimates can dip slightly
/// below zero for independent data; that is estimator noise, not a bug.
pub fn ksg_mutual_information(
    x: &Array2<f64>,
    y: &Array2<f64>,
    k: usize,
) -> Result<MiEstimate, TheoryError> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(TheoryError::InvalidInput(format!(
            "x has {n} rows but y has {}",
            y.nrows()
        )));
    }
    if k < 1 || n <= k {
        return Err(TheoryError::InvalidInput(format!(
            "need n > k >= 1, got n = {n}, k = {k}"
        )));
    }
    for (name, m) in [("x", x), ("y", y)] {
        if zero_spread(m) {
            return Err(TheoryError::DegenerateData(format!(
                "marginal {name} has zero spread"
            )));
        }
    }

    let mut psi_sum = 0.0;
    let mut dx = vec![0.0f64; n];
    let mut dy = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..n {
            dx[j] = chebyshev(x.row(i), x.row(j));
            dy[j] = chebyshev(y.row(i), y.row(j));
        }
        let mut joint: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| dx[j].max(dy[j]))
            .collect();
        let (_, kth, _) = joint.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *kth;
        let mut n_x = 0usize;
        let mut n_y = 0usize;
        for j in 0..n {
            if j == i {
                continue;
            }
            if dx[j] < eps {
                n_x += 1;
            }
            if dy[j] < eps {
                n_y += 1;
            }
        }
        psi_sum += digamma((n_x + 1) as f64) + digamma((n_y + 1) as f64);
    }
    let value = digamma(k as f64) + digamma(n as f64) - psi_sum / n as f64;
    Ok(MiEstimate {
        value,
        k_neighbors: k,
        n_samples: n,
    })
}

/// How the reparametrization maps in [`mi_invariance_check`] are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMapKind {
    /// No-op maps: the two estimates are the same computation.
    Identity,
    /// Gaussian square matrices rejection-sampled to condition number ≤ 10.
    Invertible,
    /// Q factors of Gaussian matrices: perfectly conditioned isometries.
    Orthogonal,
}

/// MI before and after reparametrizing both variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiInvarianceReport {
    pub map_kind: LinearMapKind,
    pub before: MiEstimate,
    pub after: MiEstimate,
    pub delta: f64,
}

/// Condition-number ceiling for the rejection-sampled invertible maps.
const MAX_CONDITION: f64 = 10.0;

/// Estimates I(X, Y), applies independent random linear maps of the given
/// kind to X and Y, re-estimates, and reports the absolute change. True MI
/// is invariant under invertible transformations; the estimator should move
/// only within its own noise.
pub fn mi_invariance_check(
    x: &Array2<f64>,
    y: &Array2<f64>,
    k: usize,
    map_kind: LinearMapKind,
    map_seed: u64,
) -> Result<MiInvarianceReport, TheoryError> {
    let before = ksg_mutual_information(x, y, k)?;
    let mut master = ChaCha8Rng::seed_from_u64(map_seed);
    let seed_x: u64 = master.random();
    let seed_y: u64 = master.random();
    let mapped_x = apply_linear_map(x, map_kind, seed_x);
    let mapped_y = apply_linear_map(y, map_kind, seed_y);
    let after = ksg_mutual_information(&mapped_x, &mapped_y, k)?;
    Ok(MiInvarianceReport {
        map_kind,
        before,
        after,
        delta: (before.value - after.value).abs(),
    })
}

fn apply_linear_map(points: &Array2<f64>, kind: LinearMapKind, seed: u64) -> Array2<f64> {
    let d = points.ncols();
    let map = match kind {
        LinearMapKind::Identity => return points.clone(),
        LinearMapKind::Invertible => random_well_conditioned(d, seed),
        LinearMapKind::Orthogonal => random_orthogonal(d, seed),
    };
    // Rows transform as v ↦ Mv, i.e. X ↦ X·Mᵀ.
    points.dot(&map.t())
}

fn gaussian_nalgebra(d: usize, rng: &mut ChaCha8Rng) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng))
}

fn to_ndarray(m: &nalgebra::DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Gaussian square matrix, rejection-sampled until its SVD condition number
/// is at most [`MAX_CONDITION`].
fn random_well_conditioned(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..10_000 {
        let candidate = gaussian_nalgebra(d, &mut rng);
        let svd = candidate.clone().svd(false, false);
        let s_max = svd.singular_values.max();
        let s_min = svd.singular_values.min();
        if s_min > 1e-9 && s_max / s_min <= MAX_CONDITION {
            return to_ndarray(&candidate);
        }
    }
    unreachable!("well-conditioned Gaussian matrices are not this rare");
}

/// Q factor of a Gaussian matrix: a Haar-ish random orthogonal map.
fn random_orthogonal(d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = gaussian_nalgebra(d, &mut rng).qr().q();
    to_ndarray(&q)
}

/// IID standard-normal cloud; the shared test bed for the projection and
/// estimator checks.
pub fn gaussian_points(n: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, dim), |_| StandardNormal.sample(&mut rng))
}

/// Correlated standard-normal pair sampler for the Gaussian MI oracle:
/// X ~ N(0,1), Y = ρX + √(1−ρ²)·Z. The closed-form MI is −½·ln(1−ρ²).
pub fn correlated_gaussians(n: usize, rho: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
    assert!(rho.abs() < 1.0, "correlation must lie in (-1, 1)");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Array2::zeros((n, 1));
    let mut y = Array2::zeros((n, 1));
    let tail = (1.0 - rho * rho).sqrt();
    for i in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        x[[i, 0]] = a;
        y[[i, 0]] = rho * a + tail * b;
    }
    (x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn high_dimensional_distances_concentrate_at_sqrt_two() {
        let stats = check_distance_asymptotics(512, 2000, 1);
        assert!(
            (stats.mean - std::f64::consts::SQRT_2).abs() < 0.01,
            "mean {} too far from sqrt(2)",
            stats.mean
        );
        let predicted = 1.0 / 1024.0;
        assert!(
            (stats.variance - predicted).abs() < 0.25 * predicted,
            "variance {} vs predicted {predicted}",
            stats.variance
        );
    }

    #[test]
    fn low_dimension_reports_the_mismatch_without_complaint() {
        let stats = check_distance_asymptotics(2, 500, 2);
        assert_eq!(stats.dim, 2);
        assert!(stats.mean.is_finite() && stats.mean > 0.0);
        // On the circle the true mean is 4/π ≈ 1.273, nowhere near √2; the
        // report simply records the disagreement.
        assert!((stats.mean - stats.predicted_mean).abs() > 0.05);
    }

    #[test]
    fn concentration_improves_with_dimension() {
        let err = |dim: usize| {
            let s = check_distance_asymptotics(dim, 1000, 3);
            (s.mean - s.predicted_mean).abs()
        };
        assert!(err(512) < err(8));
    }

    #[test]
    fn projection_is_linear_deterministic_and_norm_preserving() {
        let zero = Array2::zeros((5, 16));
        assert_eq!(jl_project(&zero, 8, 4), Array2::<f64>::zeros((5, 8)));

        let pts = gaussian_points(10, 16, 5);
        assert_eq!(jl_project(&pts, 8, 6), jl_project(&pts, 8, 6));

        // Expected squared norm is preserved even without dimension
        // reduction; average the single-point ratio over 100 seeds.
        let x = gaussian_points(1, 32, 7);
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        let mean_ratio: f64 = (0..100)
            .map(|seed| {
                let p = jl_project(&x, 32, 1000 + seed);
                p.iter().map(|v| v * v).sum::<f64>() / norm_sq
            })
            .sum::<f64>()
            / 100.0;
        assert!(
            (mean_ratio - 1.0).abs() < 0.1,
            "mean squared-norm ratio {mean_ratio}"
        );
    }

    #[test]
    fn identity_projection_has_zero_distortion() {
        let pts = gaussian_points(20, 12, 8);
        let report = jl_distortion(&pts, &pts).unwrap();
        assert_eq!(report.max_distortion_eps, 0.0);
        assert_eq!(report.distortions.len(), 20 * 19 / 2);
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let mut pts = gaussian_points(6, 4, 9);
        let row = pts.row(1).to_owned();
        pts.row_mut(4).assign(&row);
        match jl_distortion(&pts, &pts) {
            Err(TheoryError::DuplicatePoints { i: 1, j: 4 }) => {}
            other => panic!("expected DuplicatePoints {{1, 4}}, got {other:?}"),
        }
    }

    #[test]
    fn distortion_is_scale_invariant() {
        let pts = gaussian_points(30, 64, 10);
        let proj = jl_project(&pts, 16, 11);
        let base = jl_distortion(&pts, &proj).unwrap();
        for c in [1e-3, 0.5, 40.0] {
            let scaled = jl_distortion(&(&pts * c), &(&proj * c)).unwrap();
            for (a, b) in base.distortions.iter().zip(&scaled.distortions) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn median_distortion_shrinks_as_target_dimension_grows() {
        for seed in 0..3 {
            let pts = gaussian_points(100, 256, 20 + seed);
            let medians: Vec<f64> = [16usize, 32, 64, 128]
                .iter()
                .map(|&t| {
                    let proj = jl_project(&pts, t, 100 + seed);
                    jl_distortion(&pts, &proj).unwrap().median_distortion()
                })
                .collect();
            for w in medians.windows(2) {
                assert!(w[1] < w[0], "seed {seed}: medians {medians:?}");
            }
        }
    }

    #[test]
    fn independent_variables_have_near_zero_mi() {
        for seed in 0..10 {
            let x = gaussian_points(2000, 1, 30 + seed);
            let y = gaussian_points(2000, 1, 300 + seed);
            let est = ksg_mutual_information(&x, &y, 5).unwrap();
            assert!(
                est.value.abs() < 0.05,
                "seed {seed}: |{}| >= 0.05",
                est.value
            );
        }
    }

    #[test]
    fn near_deterministic_dependence_inflates_the_estimate() {
        let x = gaussian_points(2000, 1, 40);
        let noise = gaussian_points(2000, 1, 41);
        let y = &x + &(&noise * 1e-3);
        let est = ksg_mutual_information(&x, &y, 5).unwrap();
        assert!(est.value > 2.0, "MI {} not > 2 nats", est.value);
    }

    #[test]
    fn correlated_gaussians_match_the_closed_form() {
        let expected = -0.5 * (1.0 - 0.81f64).ln();
        for seed in 0..5 {
            let (x, y) = correlated_gaussians(2000, 0.9, 50 + seed);
            let est = ksg_mutual_information(&x, &y, 5).unwrap();
            assert!(
                (est.value - expected).abs() < 0.1,
                "seed {seed}: {} vs {expected}",
                est.value
            );
        }
    }

    #[test]
    fn estimate_decreases_as_noise_grows() {
        let x = gaussian_points(1500, 1, 60);
        let noise = gaussian_points(1500, 1, 61);
        let mut last = f64::INFINITY;
        for sd in [0.05, 0.2, 1.0, 3.0] {
            let y = &x + &(&noise * sd);
            let est = ksg_mutual_information(&x, &y, 5).unwrap().value;
            assert!(est < last, "MI {est} did not decrease at sd {sd}");
            last = est;
        }
    }

    #[test]
    fn degenerate_and_malformed_inputs_error() {
        let x = Array2::zeros((100, 1));
        let y = gaussian_points(100, 1, 70);
        assert!(matches!(
            ksg_mutual_information(&x, &y, 5),
            Err(TheoryError::DegenerateData(_))
        ));
        assert!(matches!(
            ksg_mutual_information(&y, &y, 0),
            Err(TheoryError::InvalidInput(_))
        ));
        assert!(matches!(
            ksg_mutual_information(&y, &y, 100),
            Err(TheoryError::InvalidInput(_))
        ));
        let short = gaussian_points(50, 1, 71);
        assert!(matches!(
            ksg_mutual_information(&y, &short, 5),
            Err(TheoryError::InvalidInput(_))
        ));
    }

    #[test]
    fn identity_maps_change_nothing() {
        let (x, y) = correlated_gaussians(500, 0.9, 80);
        let report = mi_invariance_check(&x, &y, 5, LinearMapKind::Identity, 81).unwrap();
        assert_eq!(report.delta, 0.0);
        assert_eq!(report.before, report.after);
    }

    #[test]
    fn invariance_under_well_conditioned_maps() {
        for seed in 0..4 {
            let (x, y) = correlated_gaussians(2000, 0.9, 90 + seed);
            let report =
                mi_invariance_check(&x, &y, 5, LinearMapKind::Invertible, 900 + seed).unwrap();
            assert!(
                report.delta < 0.1,
                "seed {seed}: delta {} not < 0.1",
                report.delta
            );
        }
    }

    #[test]
    fn orthogonal_maps_are_no_worse_than_general_invertible_ones() {
        let mut worst = [0.0f64; 2];
        for seed in 0..6 {
            let (x, y) = correlated_gaussians(1000, 0.9, 110 + seed);
            for (slot, kind) in [LinearMapKind::Orthogonal, LinearMapKind::Invertible]
                .into_iter()
                .enumerate()
            {
                let report = mi_invariance_check(&x, &y, 5, kind, 1100 + seed).unwrap();
                worst[slot] = worst[slot].max(report.delta);
            }
        }
        let [orthogonal, invertible] = worst;
        assert!(
            orthogonal <= invertible + 0.02,
            "orthogonal worst {orthogonal} vs invertible worst {invertible}"
        );
    }

    #[test]
    fn sampled_maps_meet_their_structural_contracts() {
        let m = random_well_conditioned(3, 7);
        let nm = nalgebra::DMatrix::from_fn(3, 3, |i, j| m[[i, j]]);
        let svd = nm.svd(false, false);
        let cond = svd.singular_values.max() / svd.singular_values.min();
        assert!(cond <= MAX_CONDITION);

        let q = random_orthogonal(4, 8);
        let qtq = q.t().dot(&q);
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(qtq[[i, j]], expected, epsilon = 1e-10);
            }
        }
    }
}
