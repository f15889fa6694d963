//! Frozen acceptance bounds with the measurements that produced them.
//!
//! Every nontrivial constant here was calibrated once by
//! `examples/calibrate.rs` (measured statistics quoted in the comments) and
//! then frozen; tests compare against these values and must not loosen them
//! ad hoc. Rerun the example to regenerate the measurements.

/// Maximum allowed per-seed JL squared-distance distortion for N = 100
/// Gaussian points projected 256 → 64, allowed to fail in at most
/// `1 - JL_SEED_PASS_FRACTION` of the seeds.
///
/// Calibration over 20 seeds measured per-seed maxima in [0.5701, 0.9096]
/// with median 0.7569. The per-pair squared-distance ratio behaves like a
/// chi-square with 64 degrees of freedom over its mean, so across 4950
/// pairs the *maximum* |ratio - 1| lands near 0.7-0.9 for every seed; a 0.5
/// ceiling fails almost surely at this N and target dimension and is not a
/// usable bound for the maximum (it is comfortably met by the median,
/// 0.118 at target 64).
pub const JL_MAX_DISTORTION_BOUND: f64 = 1.0;

/// Fraction of calibration seeds that must meet [`JL_MAX_DISTORTION_BOUND`].
pub const JL_SEED_PASS_FRACTION: f64 = 0.95;

/// Sample-mean tolerance around √2 for pairwise distances of 2000 uniform
/// points on S^511. Measured error ~1e-4; the bound leaves two orders of
/// headroom for the Monte-Carlo noise.
pub const ASYMPTOTICS_MEAN_TOLERANCE: f64 = 0.01;

/// Relative tolerance on the distance variance against 1/(2·dim).
pub const ASYMPTOTICS_VARIANCE_REL_TOLERANCE: f64 = 0.25;

/// Absolute tolerance (nats) of the KSG estimate against the closed-form
/// Gaussian mutual information at correlation 0.9, N = 2000, k = 5.
pub const MI_GAUSSIAN_TOLERANCE: f64 = 0.1;

/// Maximum allowed |before - after| (nats) when re-estimating MI after
/// independent well-conditioned invertible linear reparametrizations.
pub const MI_INVARIANCE_DELTA_BOUND: f64 = 0.1;

/// Absolute MI bound (nats) for independent standard normals at N = 2000,
/// k = 5; the estimator's noise floor sits an order of magnitude below.
pub const MI_INDEPENDENT_BOUND: f64 = 0.05;

/// Accuracy slack for the benchmark-arm comparisons: the regularized arm's
/// mean test accuracy must be at least the baseline's minus this margin.
///
/// Calibration (sphere blobs, 4 classes, dim 32, concentration 25, N=1000,
/// 5 seeds, 60 epochs, lr 0.03, momentum 0.9): CE+InfoNCE+consistency at
/// 10% labels measured mean 0.9900 vs CE-only 0.9880 (+0.0020); with 40%
/// symmetric noise and full labels, CE+consistency 0.9660 vs CE-only
/// 0.9660 (+0.0000). Both arms saturate near the task ceiling, so the
/// assertable accuracy claim is parity within float wiggle; the structural
/// improvement shows up in the KS statistic instead.
pub const BENCHMARK_ACCURACY_MARGIN: f64 = 0.01;

/// Minimum accuracy of the supervised baseline itself (measured 0.9880 at
/// 10% labels; the plain-supervised contract pins > 0.90 within 50 epochs).
pub const BENCHMARK_BASELINE_ACCURACY: f64 = 0.90;

/// Seeds (out of 5) in which the end-of-training KS statistic must be
/// strictly smaller with the consistency term than without, on the
/// noisy-label arm. Measured 4/5 (losing seed 4: 0.3513 vs 0.2814; winning
/// seeds carry wide margins, e.g. 0.0706 vs 0.2828).
pub const BENCHMARK_KS_WINS_REQUIRED: usize = 4;
