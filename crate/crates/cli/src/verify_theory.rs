//! `hcr verify-theory`: numerical checks of the structural claims the
//! regularizer leans on, each compared against the frozen bounds in
//! `hcr_core::tolerances`. Prints one `check <name>: pass|fail` line per
//! check, writes `theory_report.json`, and exits 0 only if everything
//! passed.
//!
//! Three checks:
//! - `asymptotics`: pairwise distances on S^{d-1} concentrate at √2 with
//!   variance ≈ 1/(2d).
//! - `jl`: random Gaussian projections keep squared pairwise distances
//!   within the calibrated distortion bound, and the median distortion
//!   shrinks as the target dimension grows.
//! - `mi`: the k-NN mutual-information estimator is near zero for
//!   independent pairs, matches the Gaussian closed form, and is invariant
//!   under well-conditioned linear maps.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hcr_core::theory::{
    check_distance_asymptotics, correlated_gaussians, gaussian_points, jl_distortion, jl_project,
    ksg_mutual_information, mi_invariance_check, LinearMapKind,
};
use hcr_core::tolerances::{
    ASYMPTOTICS_MEAN_TOLERANCE, ASYMPTOTICS_VARIANCE_REL_TOLERANCE, JL_MAX_DISTORTION_BOUND,
    JL_SEED_PASS_FRACTION, MI_GAUSSIAN_TOLERANCE, MI_INDEPENDENT_BOUND,
    MI_INVARIANCE_DELTA_BOUND,
};
use serde::Serialize;

use crate::manifest::RunManifest;

/// The JL bound was calibrated on clouds of this shape; the check always
/// uses it rather than the (much larger) MI/asymptotics sample sizes.
const JL_POINTS: usize = 100;
const JL_SOURCE_DIM: usize = 256;
const JL_MEDIAN_TARGETS: [usize; 4] = [16, 32, 64, 128];

/// Correlation used for the Gaussian MI oracle.
const MI_RHO: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum CheckName {
    Asymptotics,
    Jl,
    Mi,
}

#[derive(Debug, Args)]
pub struct VerifyTheoryArgs {
    /// Run a single check instead of all three.
    #[arg(long, value_enum)]
    pub only: Option<CheckName>,
    /// Seed count for every check (defaults: asymptotics 3, jl 20, mi 3).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Sphere dimension for the asymptotics check.
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    /// Sample count for the asymptotics and MI checks.
    #[arg(long = "n-points", default_value_t = 2000)]
    pub n_points: usize,
    /// Projection target dimension for the JL check.
    #[arg(long = "target-dim", default_value_t = 64)]
    pub target_dim: usize,
    /// Neighbor count for the MI estimator.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Output directory (default: $HCR_OUT_DIR, else the working directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CheckReport {
    name: String,
    pass: bool,
    details: serde_json::Value,
}

pub fn run(args: &VerifyTheoryArgs) -> anyhow::Result<i32> {
    let want = |name: CheckName| args.only.is_none() || args.only == Some(name);
    if let Some(seeds) = args.seeds {
        if seeds == 0 {
            crate::usage_error("--seeds must be positive");
        }
    }
    if want(CheckName::Asymptotics) && (args.dim < 2 || args.n_points < 100) {
        crate::usage_error("asymptotics needs --dim >= 2 and --n-points >= 100");
    }
    if want(CheckName::Jl) && args.target_dim < 1 {
        crate::usage_error("--target-dim must be positive");
    }
    if want(CheckName::Mi) && (args.k < 1 || args.n_points <= args.k) {
        crate::usage_error("mi needs --k >= 1 and --n-points > --k");
    }

    let dir = crate::resolve_out_dir(args.out.as_deref())?;
    let mut manifest = RunManifest::new(
        "verify-theory",
        serde_json::json!({
            "only": args.only.map(|o| format!("{o:?}").to_lowercase()),
            "seeds": args.seeds,
            "dim": args.dim,
            "n_points": args.n_points,
            "target_dim": args.target_dim,
            "k": args.k,
        }),
    );
    manifest
        .seed("asymptotics_base", 100)
        .seed("jl_points_base", 0)
        .seed("jl_projection_base", 10_000)
        .seed("jl_median_projection_base", 20_000)
        .seed("mi_independent_base", 500)
        .seed("mi_gaussian_base", 600)
        .seed("mi_map_base", 700)
        .artifact("report", "theory_report.json");
    manifest.write(&dir)?;

    let mut checks = Vec::new();
    if want(CheckName::Asymptotics) {
        checks.push(check_asymptotics(args));
    }
    if want(CheckName::Jl) {
        checks.push(check_jl(args)?);
    }
    if want(CheckName::Mi) {
        checks.push(check_mi(args)?);
    }

    let all_pass = checks.iter().all(|c| c.pass);
    let report = serde_json::json!({ "checks": checks, "all_pass": all_pass });
    std::fs::write(
        dir.join("theory_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;

    for check in &checks {
        println!(
            "check {}: {}",
            check.name,
            if check.pass { "pass" } else { "fail" }
        );
    }
    Ok(if all_pass { 0 } else { 1 })
}

fn check_asymptotics(args: &VerifyTheoryArgs) -> CheckReport {
    let seeds = args.seeds.unwrap_or(3);
    let mut per_seed = Vec::new();
    let mut pass = true;
    for s in 0..seeds {
        let stats = check_distance_asymptotics(args.dim, args.n_points, 100 + s as u64);
        let mean_ok = (stats.mean - stats.predicted_mean).abs() <= ASYMPTOTICS_MEAN_TOLERANCE;
        let var_ok = (stats.variance - stats.predicted_variance).abs()
            <= ASYMPTOTICS_VARIANCE_REL_TOLERANCE * stats.predicted_variance;
        pass &= mean_ok && var_ok;
        per_seed.push(serde_json::json!({
            "seed": 100 + s as u64,
            "mean": stats.mean,
            "predicted_mean": stats.predicted_mean,
            "variance": stats.variance,
            "predicted_variance": stats.predicted_variance,
            "pass": mean_ok && var_ok,
        }));
    }
    CheckReport {
        name: "asymptotics".into(),
        pass,
        details: serde_json::json!({
            "dim": args.dim,
            "n_points": args.n_points,
            "mean_tolerance": ASYMPTOTICS_MEAN_TOLERANCE,
            "variance_rel_tolerance": ASYMPTOTICS_VARIANCE_REL_TOLERANCE,
            "per_seed": per_seed,
        }),
    }
}

fn check_jl(args: &VerifyTheoryArgs) -> anyhow::Result<CheckReport> {
    let seeds = args.seeds.unwrap_or(20);
    let mut maxima = Vec::new();
    let mut within = 0usize;
    for s in 0..seeds {
        let pts = gaussian_points(JL_POINTS, JL_SOURCE_DIM, s as u64);
        let proj = jl_project(&pts, args.target_dim, 10_000 + s as u64);
        let report = jl_distortion(&pts, &proj)?;
        if report.max_distortion_eps <= JL_MAX_DISTORTION_BOUND {
            within += 1;
        }
        maxima.push(report.max_distortion_eps);
    }
    let fraction = within as f64 / seeds as f64;

    let pts = gaussian_points(JL_POINTS, JL_SOURCE_DIM, 0);
    let mut medians = Vec::new();
    for target in JL_MEDIAN_TARGETS {
        let proj = jl_project(&pts, target, 20_000 + target as u64);
        medians.push(jl_distortion(&pts, &proj)?.median_distortion());
    }
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);

    Ok(CheckReport {
        name: "jl".into(),
        pass: fraction >= JL_SEED_PASS_FRACTION && decreasing,
        details: serde_json::json!({
            "n_points": JL_POINTS,
            "source_dim": JL_SOURCE_DIM,
            "target_dim": args.target_dim,
            "max_distortion_bound": JL_MAX_DISTORTION_BOUND,
            "required_pass_fraction": JL_SEED_PASS_FRACTION,
            "pass_fraction": fraction,
            "per_seed_max": maxima,
            "median_targets": JL_MEDIAN_TARGETS,
            "medians": medians,
            "medians_decreasing": decreasing,
        }),
    })
}

fn check_mi(args: &VerifyTheoryArgs) -> anyhow::Result<CheckReport> {
    let seeds = args.seeds.unwrap_or(3);
    let n = args.n_points;
    let oracle = -0.5 * (1.0 - MI_RHO * MI_RHO).ln();
    let mut per_seed = Vec::new();
    let mut pass = true;
    for s in 0..seeds as u64 {
        let (x0, y0) = correlated_gaussians(n, 0.0, 500 + s);
        let independent = ksg_mutual_information(&x0, &y0, args.k)?.value;
        let (x, y) = correlated_gaussians(n, MI_RHO, 600 + s);
        let gaussian = ksg_mutual_information(&x, &y, args.k)?.value;
        let invariance = mi_invariance_check(&x, &y, args.k, LinearMapKind::Invertible, 700 + s)?;

        let independent_ok = independent.abs() <= MI_INDEPENDENT_BOUND;
        let gaussian_ok = (gaussian - oracle).abs() <= MI_GAUSSIAN_TOLERANCE;
        let invariance_ok = invariance.delta <= MI_INVARIANCE_DELTA_BOUND;
        pass &= independent_ok && gaussian_ok && invariance_ok;
        per_seed.push(serde_json::json!({
            "independent": independent,
            "gaussian": gaussian,
            "gaussian_oracle": oracle,
            "invariance_delta": invariance.delta,
            "pass": independent_ok && gaussian_ok && invariance_ok,
        }));
    }
    Ok(CheckReport {
        name: "mi".into(),
        pass,
        details: serde_json::json!({
            "n_points": n,
            "k": args.k,
            "rho": MI_RHO,
            "independent_bound": MI_INDEPENDENT_BOUND,
            "gaussian_tolerance": MI_GAUSSIAN_TOLERANCE,
            "invariance_delta_bound": MI_INVARIANCE_DELTA_BOUND,
            "per_seed": per_seed,
        }),
    })
}
