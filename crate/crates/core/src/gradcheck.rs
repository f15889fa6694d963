//! Central finite-difference gradient checking.
//!
//! The harness is deliberately independent of every analytic-gradient path in
//! this crate: it only ever evaluates a scalar objective at perturbed inputs.
//! Tests freeze their verdicts against it, so it must stay that way.

use ndarray::Array2;

/// Step used by the gradient suites. Central differences have O(h²)
/// truncation error; at 1e-5 that sits around 1e-10 for O(1) curvatures,
/// while roundoff stays near 1e-11, leaving comfortable margin under the
/// 1e-5 acceptance threshold.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Relative error with a small absolute floor so structurally tiny
/// gradients (softmax saturation, near-flat kernels) do not divide by zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Checks `analytic` against central finite differences of `f` at `at`,
/// coordinate by coordinate. Returns the maximum relative error.
pub fn max_rel_error_matrix<F>(
    mut f: F,
    at: &Array2<f64>,
    analytic: &Array2<f64>,
    step: f64,
) -> f64
where
    F: FnMut(&Array2<f64>) -> f64,
{
    assert_eq!(at.dim(), analytic.dim(), "gradient shape mismatch");
    let mut worst = 0.0_f64;
    let mut work = at.clone();
    for idx in ndarray::indices(at.dim()) {
        let orig = work[idx];
        work[idx] = orig + step;
        let plus = f(&work);
        work[idx] = orig - step;
        let minus = f(&work);
        work[idx] = orig;
        let fd = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[idx], fd));
    }
    worst
}

/// Variant for symmetric pair-distance inputs: perturbs `(i,j)` and `(j,i)`
/// together (the two entries encode one pair) and checks the analytic
/// per-pair derivative stored in the strict upper triangle.
pub fn max_rel_error_symmetric_pairs<F>(
    mut f: F,
    at: &Array2<f64>,
    analytic: &Array2<f64>,
    step: f64,
) -> f64
where
    F: FnMut(&Array2<f64>) -> f64,
{
    let n = at.nrows();
    assert_eq!(at.dim(), (n, n), "expected a square matrix");
    assert_eq!(analytic.dim(), (n, n), "gradient shape mismatch");
    let mut worst = 0.0_f64;
    let mut work = at.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let orig = work[[i, j]];
            work[[i, j]] = orig + step;
            work[[j, i]] = orig + step;
            let plus = f(&work);
            work[[i, j]] = orig - step;
            work[[j, i]] = orig - step;
            let minus = f(&work);
            work[[i, j]] = orig;
            work[[j, i]] = orig;
            let fd = (plus - minus) / (2.0 * step);
            worst = worst.max(relative_error(analytic[[i, j]], fd));
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn quadratic_gradient_checks_out() {
        let at = array![[1.0, -2.0], [0.5, 3.0]];
        let analytic = at.mapv(|v| 2.0 * v);
        let err = max_rel_error_matrix(|x| x.iter().map(|v| v * v).sum(), &at, &analytic, 1e-5);
        assert!(err < 1e-9, "err = {err}");
    }

    #[test]
    fn wrong_gradient_is_flagged() {
        let at = array![[1.0, 2.0]];
        let analytic = at.mapv(|v| 3.0 * v); // wrong: true gradient is 2v
        let err = max_rel_error_matrix(|x| x.iter().map(|v| v * v).sum(), &at, &analytic, 1e-5);
        assert!(err > 0.3, "err = {err}");
    }

    #[test]
    fn symmetric_pair_perturbation_reads_one_pair() {
        // f = sum of upper-triangle entries squared; with the pair
        // parameterization the derivative w.r.t. pair (i,j) is 2·d_ij.
        let at = array![[0.0, 0.7, 1.2], [0.7, 0.0, 0.4], [1.2, 0.4, 0.0]];
        let analytic = at.mapv(|v| 2.0 * v);
        let err = max_rel_error_symmetric_pairs(
            |x| {
                let mut acc = 0.0;
                for i in 0..3 {
                    for j in (i + 1)..3 {
                        acc += x[[i, j]] * x[[i, j]];
                    }
                }
                acc
            },
            &at,
            &analytic,
            1e-5,
        );
        assert!(err < 1e-9, "err = {err}");
    }
}
