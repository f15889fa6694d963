//! The HCR objective and its companions, with analytic gradients.
//!
//! The regularizer treats one distance structure as a teacher distribution
//! and the other as a student: pair distances from the sphere-projected
//! classifier logits (`d_g`) and from the projection head (`d_h`) are mapped
//! through a Gaussian similarity kernel to pseudo-probabilities `p` and `q`,
//! and the loss is the binary cross-entropy `-p·ln q - (1-p)·ln(1-q)`
//! averaged over all unordered pairs. Minimizing it pulls the two pairwise
//! similarity structures together; with the default kernel the per-pair
//! optimum is exactly `q = p`.
//!
//! The composite training objective is
//! `L = L_s + lambda_u · L_u + weight · HCR`
//! where `L_s` is masked softmax cross-entropy and `L_u` is either InfoNCE
//! or its pseudo-label grouped variant (PGC).
//!
//! Every operation returns a [`LossValue`]: the scalar plus a gradient per
//! differentiable input that the configuration marks as flowing. All
//! gradients here are exact reverse-mode derivatives; the test suites check
//! them against central finite differences.

use std::collections::BTreeMap;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    pairwise_distances, pairwise_distances_backward, DistanceMatrix, UnitSphereBatch,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    ConfigError(String),
    #[error("no examples selected: {0}")]
    EmptyBatch(String),
    #[error("all pseudo-labels are identical; PGC has no negatives to contrast against")]
    NoNegatives,
}

/// Gaussian similarity kernel `s(d) = C · (1/(σ√(2π))) · exp(-(d-μ)²/(2σ²))`.
///
/// The default is μ = 0, σ = 1/√2, C = σ√(2π), which collapses to
/// `s(d) = exp(-d²)`: peak exactly 1 at distance 0, `e⁻²` at √2 (the typical
/// high-dimensional pair distance), `e⁻⁴` at the antipodal distance 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub mu: f64,
    pub sigma: f64,
    /// Scale factor `C` applied on top of the Gaussian density. Chosen by
    /// default so the kernel's peak is exactly 1.
    pub normalizer: f64,
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        let sigma = 1.0 / 2.0_f64.sqrt();
        Self {
            mu: 0.0,
            sigma,
            normalizer: sigma * (2.0 * std::f64::consts::PI).sqrt(),
        }
    }
}

impl SimilarityConfig {
    /// Peak amplitude `C/(σ√(2π))` of the kernel.
    fn amplitude(&self) -> f64 {
        self.normalizer / (self.sigma * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// σ > 0, C > 0, and the kernel must not exceed 1 anywhere on [0, 2]
    /// (similarities act as probabilities inside a cross-entropy). The
    /// kernel is unimodal, so it suffices to check it at μ clamped into
    /// the interval.
    pub fn validate(&self) -> Result<(), LossError> {
        if self.sigma <= 0.0 || !self.sigma.is_finite() {
            return Err(LossError::ConfigError(format!(
                "sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        if self.normalizer <= 0.0 || !self.normalizer.is_finite() {
            return Err(LossError::ConfigError(format!(
                "normalizer must be positive and finite, got {}",
                self.normalizer
            )));
        }
        let peak_on_range = self.evaluate(self.mu.clamp(0.0, 2.0));
        if peak_on_range > 1.0 + 1e-12 {
            return Err(LossError::ConfigError(format!(
                "kernel reaches {peak_on_range} on [0, 2]; similarities must stay within (0, 1]"
            )));
        }
        Ok(())
    }

    /// Kernel value at a single distance.
    pub fn evaluate(&self, d: f64) -> f64 {
        let z = d - self.mu;
        self.amplitude() * (-z * z / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// d/dd of the kernel: `s(d) · (-(d-μ)/σ²)`.
    fn derivative(&self, d: f64) -> f64 {
        self.evaluate(d) * (-(d - self.mu) / (self.sigma * self.sigma))
    }
}

/// Pairwise similarities in (0, 1], same layout as the distance matrix that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Array2<f64>,
}

impl SimilarityMatrix {
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Applies the Gaussian kernel elementwise to a distance matrix.
pub fn gaussian_similarity(
    distances: &DistanceMatrix,
    cfg: &SimilarityConfig,
) -> Result<SimilarityMatrix, LossError> {
    cfg.validate()?;
    Ok(SimilarityMatrix {
        values: distances.values().mapv(|d| cfg.evaluate(d)),
    })
}

/// Which inputs the HCR gradient flows into.
///
/// `ClassifierOnly` treats the projection-head distances as a fixed target
/// (gradient w.r.t. `d_h` absent); `Both` lets the regularizer shape both
/// heads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientFlow {
    ClassifierOnly,
    Both,
}

/// HCR configuration: one kernel per head, the clamp that keeps the BCE
/// finite, the gradient routing, and the composite-objective weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HcrConfig {
    pub similarity_g: SimilarityConfig,
    pub similarity_h: SimilarityConfig,
    /// Similarities are clamped into `[clamp_eps, 1 - clamp_eps]` before the
    /// logs; gradients are zero where the clamp is active.
    pub clamp_eps: f64,
    pub gradient_flow: GradientFlow,
    /// Coefficient of the HCR term in the composite objective. [`hcr_loss`]
    /// itself returns the unweighted value; [`composite_loss`] applies this,
    /// and a weight of exactly 0 skips the HCR computation entirely.
    pub weight: f64,
}

impl Default for HcrConfig {
    fn default() -> Self {
        Self {
            similarity_g: SimilarityConfig::default(),
            similarity_h: SimilarityConfig::default(),
            clamp_eps: 1e-7,
            gradient_flow: GradientFlow::ClassifierOnly,
            weight: 1.0,
        }
    }
}

impl HcrConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        self.similarity_g.validate()?;
        self.similarity_h.validate()?;
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(LossError::ConfigError(format!(
                "clamp_eps must lie in (0, 0.5), got {}",
                self.clamp_eps
            )));
        }
        if self.weight < 0.0 || !self.weight.is_finite() {
            return Err(LossError::ConfigError(format!(
                "weight must be finite and nonnegative, got {}",
                self.weight
            )));
        }
        Ok(())
    }
}

/// Differentiable inputs a loss may report gradients for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InputSlot {
    /// Raw classifier logits.
    Logits,
    /// Sphere-projected classifier logits (composite objective).
    SphereLogits,
    /// Classifier-side pair distances.
    DgDistances,
    /// Projection-side pair distances.
    DhDistances,
    /// First-view projections.
    Queries,
    /// Second-view projections.
    Keys,
}

/// A scalar loss plus one gradient per flowing input.
///
/// Gradients are present for exactly the inputs the configuration marks as
/// flowing. Distance-matrix gradients use the per-pair convention: entry
/// `(i, j)` is the derivative w.r.t. the unordered pair distance, stored
/// symmetrically with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    gradients: BTreeMap<InputSlot, Array2<f64>>,
}

impl LossValue {
    fn new(value: f64) -> Self {
        Self {
            value,
            gradients: BTreeMap::new(),
        }
    }

    fn with(mut self, slot: InputSlot, grad: Array2<f64>) -> Self {
        self.gradients.insert(slot, grad);
        self
    }

    pub fn gradient(&self, slot: InputSlot) -> Option<&Array2<f64>> {
        self.gradients.get(&slot)
    }

    pub fn slots(&self) -> impl Iterator<Item = InputSlot> + '_ {
        self.gradients.keys().copied()
    }
}

fn check_same_size(d_g: &DistanceMatrix, d_h: &DistanceMatrix) -> Result<usize, LossError> {
    if d_g.len() != d_h.len() {
        return Err(LossError::ShapeMismatch(format!(
            "distance matrices disagree: {} vs {} points",
            d_g.len(),
            d_h.len()
        )));
    }
    Ok(d_g.len())
}

/// Hyperspherical consistency regularization.
///
/// `p = s_g(d_g)` plays the teacher probability and `q = s_h(d_h)` the
/// student; the loss is the mean over the strict upper triangle of
/// `-p·ln q - (1-p)·ln(1-q)` after clamping both into
/// `[clamp_eps, 1-clamp_eps]`.
///
/// Gradients (w.r.t. the pair distances) flow to `d_g` always and to `d_h`
/// only under [`GradientFlow::Both`]. The `weight` field is *not* applied
/// here; see [`composite_loss`].
pub fn hcr_loss(
    d_g: &DistanceMatrix,
    d_h: &DistanceMatrix,
    cfg: &HcrConfig,
) -> Result<LossValue, LossError> {
    cfg.validate()?;
    let n = check_same_size(d_g, d_h)?;
    if n < 2 {
        return Err(LossError::EmptyBatch(format!(
            "HCR needs at least 2 points to form a pair, got {n}"
        )));
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let eps = cfg.clamp_eps;
    let mut value = 0.0;
    let mut grad_g = Array2::zeros((n, n));
    let mut grad_h = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let dg = d_g.values()[[i, j]];
            let dh = d_h.values()[[i, j]];
            let p_raw = cfg.similarity_g.evaluate(dg);
            let q_raw = cfg.similarity_h.evaluate(dh);
            let p = p_raw.clamp(eps, 1.0 - eps);
            let q = q_raw.clamp(eps, 1.0 - eps);
            value += -p * q.ln() - (1.0 - p) * (1.0 - q).ln();

            // d(loss)/dp, zero where the clamp is active.
            if p_raw > eps && p_raw < 1.0 - eps {
                let dl_dp = (-q.ln() + (1.0 - q).ln()) / pairs;
                let g = dl_dp * cfg.similarity_g.derivative(dg);
                grad_g[[i, j]] = g;
                grad_g[[j, i]] = g;
            }
            if cfg.gradient_flow == GradientFlow::Both && q_raw > eps && q_raw < 1.0 - eps {
                let dl_dq = (-p / q + (1.0 - p) / (1.0 - q)) / pairs;
                let g = dl_dq * cfg.similarity_h.derivative(dh);
                grad_h[[i, j]] = g;
                grad_h[[j, i]] = g;
            }
        }
    }
    let mut out = LossValue::new(value / pairs).with(InputSlot::DgDistances, grad_g);
    if cfg.gradient_flow == GradientFlow::Both {
        out = out.with(InputSlot::DhDistances, grad_h);
    }
    Ok(out)
}

/// Masked softmax cross-entropy over raw logits.
///
/// Averages `-ln softmax(logits_i)[label_i]` over the rows `mask` selects.
/// The gradient is `(softmax - onehot)/m` on selected rows and zero
/// elsewhere.
pub fn cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    mask: &[bool],
) -> Result<LossValue, LossError> {
    let (n, classes) = logits.dim();
    if labels.len() != n || mask.len() != n {
        return Err(LossError::ShapeMismatch(format!(
            "logits have {n} rows but got {} labels and {} mask entries",
            labels.len(),
            mask.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(LossError::ShapeMismatch(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let selected = mask.iter().filter(|&&m| m).count();
    if selected == 0 {
        return Err(LossError::EmptyBatch(
            "mask selects no rows for cross-entropy".into(),
        ));
    }
    let m = selected as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros((n, classes));
    for (i, row) in logits.axis_iter(Axis(0)).enumerate() {
        if !mask[i] {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum_exp.ln();
        value += lse - row[labels[i]];
        for c in 0..classes {
            let softmax = (row[c] - max).exp() / sum_exp;
            let onehot = if c == labels[i] { 1.0 } else { 0.0 };
            grad[[i, c]] = (softmax - onehot) / m;
        }
    }
    Ok(LossValue::new(value / m).with(InputSlot::Logits, grad))
}

fn check_query_key_shapes(
    queries: &UnitSphereBatch,
    keys: &UnitSphereBatch,
) -> Result<usize, LossError> {
    if queries.len() != keys.len() || queries.dim() != keys.dim() {
        return Err(LossError::ShapeMismatch(format!(
            "queries are {}x{} but keys are {}x{}",
            queries.len(),
            queries.dim(),
            keys.len(),
            keys.dim()
        )));
    }
    if queries.is_empty() {
        return Err(LossError::EmptyBatch("no query/key pairs".into()));
    }
    Ok(queries.len())
}

fn check_tau(tau: f64) -> Result<(), LossError> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(LossError::ConfigError(format!(
            "temperature must be positive and finite, got {tau}"
        )));
    }
    Ok(())
}

/// InfoNCE: each query must identify its aligned key among all keys.
///
/// With `S = Q Kᵀ/τ`, the loss is the mean over rows of
/// `-S_ii + logsumexp_j S_ij`. Gradients flow to both queries and keys
/// (w.r.t. the unit-sphere coordinates; the normalization Jacobian is
/// applied by the network backward pass).
pub fn info_nce(
    queries: &UnitSphereBatch,
    keys: &UnitSphereBatch,
    tau: f64,
) -> Result<LossValue, LossError> {
    check_tau(tau)?;
    let n = check_query_key_shapes(queries, keys)?;
    let scores = queries.values().dot(&keys.values().t()) / tau;
    let mut value = 0.0;
    let mut d_scores = Array2::zeros((n, n));
    for i in 0..n {
        let row = scores.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&s| (s - max).exp()).sum();
        value += max + sum_exp.ln() - scores[[i, i]];
        for j in 0..n {
            let softmax = (scores[[i, j]] - max).exp() / sum_exp;
            let delta = if i == j { 1.0 } else { 0.0 };
            d_scores[[i, j]] = (softmax - delta) / n as f64;
        }
    }
    let grad_q = d_scores.dot(keys.values()) / tau;
    let grad_k = d_scores.t().dot(queries.values()) / tau;
    Ok(LossValue::new(value / n as f64)
        .with(InputSlot::Queries, grad_q)
        .with(InputSlot::Keys, grad_k))
}

/// Pseudo-label grouped contrastive loss (in-batch PGC).
///
/// For query `i` the positives are its own key plus every key sharing its
/// pseudo-label; the negatives are the differently labeled keys. Each
/// positive `p` contributes `-ln[ e^{S_ip} / (e^{S_ip} + Σ_neg e^{S_im}) ]`
/// and the contributions are averaged over positives, then over queries.
/// When every pseudo-label is distinct this reduces exactly to [`info_nce`];
/// when all are identical there is nothing to contrast against.
pub fn pgc_loss(
    queries: &UnitSphereBatch,
    keys: &UnitSphereBatch,
    pseudo_labels: &[usize],
    tau: f64,
) -> Result<LossValue, LossError> {
    check_tau(tau)?;
    let n = check_query_key_shapes(queries, keys)?;
    if pseudo_labels.len() != n {
        return Err(LossError::ShapeMismatch(format!(
            "{n} queries but {} pseudo-labels",
            pseudo_labels.len()
        )));
    }
    if pseudo_labels.iter().all(|&l| l == pseudo_labels[0]) {
        return Err(LossError::NoNegatives);
    }
    let scores = queries.values().dot(&keys.values().t()) / tau;
    let mut value = 0.0;
    let mut d_scores = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let negatives: Vec<usize> = (0..n).filter(|&j| pseudo_labels[j] != pseudo_labels[i]).collect();
        let positives: Vec<usize> = (0..n).filter(|&j| pseudo_labels[j] == pseudo_labels[i]).collect();
        let weight = 1.0 / (n as f64 * positives.len() as f64);
        for &p in &positives {
            let mut max = scores[[i, p]];
            for &m in &negatives {
                max = max.max(scores[[i, m]]);
            }
            let pos_exp = (scores[[i, p]] - max).exp();
            let mut z = pos_exp;
            for &m in &negatives {
                z += (scores[[i, m]] - max).exp();
            }
            value += weight * (max + z.ln() - scores[[i, p]]);
            d_scores[[i, p]] += weight * (pos_exp / z - 1.0);
            for &m in &negatives {
                d_scores[[i, m]] += weight * ((scores[[i, m]] - max).exp() / z);
            }
        }
    }
    let grad_q = d_scores.dot(keys.values()) / tau;
    let grad_k = d_scores.t().dot(queries.values()) / tau;
    Ok(LossValue::new(value)
        .with(InputSlot::Queries, grad_q)
        .with(InputSlot::Keys, grad_k))
}

/// Which unsupervised term the composite objective uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnsupervisedKind {
    None,
    InfoNce,
    Pgc,
}

/// Composite objective configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeConfig {
    pub lambda_u: f64,
    pub unsupervised: UnsupervisedKind,
    pub tau: f64,
    pub hcr: HcrConfig,
}

impl Default for CompositeConfig {
    fn default() -> Self {
        Self {
            lambda_u: 1.0,
            unsupervised: UnsupervisedKind::InfoNce,
            tau: 0.07,
            hcr: HcrConfig::default(),
        }
    }
}

impl CompositeConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if self.lambda_u < 0.0 || !self.lambda_u.is_finite() {
            return Err(LossError::ConfigError(format!(
                "lambda_u must be finite and nonnegative, got {}",
                self.lambda_u
            )));
        }
        check_tau(self.tau)?;
        self.hcr.validate()
    }
}

/// Differentiable inputs to the composite objective, all from the same batch:
/// raw logits and their sphere projection from view 1, plus the two views'
/// projection-head outputs (queries = view 1, keys = view 2).
#[derive(Debug)]
pub struct CompositeInputs<'a> {
    pub logits: &'a Array2<f64>,
    pub sphere_logits: &'a UnitSphereBatch,
    pub queries: &'a UnitSphereBatch,
    pub keys: &'a UnitSphereBatch,
}

/// Composite loss: total plus the unweighted per-term values.
#[derive(Debug, Clone)]
pub struct CompositeLoss {
    /// Total objective with merged gradients for [`InputSlot::Logits`],
    /// [`InputSlot::SphereLogits`], [`InputSlot::Queries`], and
    /// [`InputSlot::Keys`] (each present only when its term flows).
    pub total: LossValue,
    pub supervised: f64,
    pub unsupervised: f64,
    /// Unweighted HCR value; exactly 0.0 when `hcr.weight == 0`, in which
    /// case the HCR path is skipped entirely.
    pub hcr: f64,
}

/// `L = L_s + lambda_u · L_u + weight · HCR`, gradients merged by linearity.
///
/// `L_s` is cross-entropy over the mask-selected rows; a mask selecting
/// nothing contributes zero (a sum over an empty labeled set), not an error,
/// so unlabeled-only batches are usable. The HCR distances are derived
/// internally: `d_g` from `sphere_logits`, `d_h` from `queries`, with the
/// distance-level gradients pulled back to coordinates.
pub fn composite_loss(
    inputs: &CompositeInputs,
    labels: &[usize],
    mask: &[bool],
    pseudo_labels: &[usize],
    cfg: &CompositeConfig,
) -> Result<CompositeLoss, LossError> {
    cfg.validate()?;
    let n = inputs.logits.nrows();
    for (name, len) in [
        ("sphere_logits", inputs.sphere_logits.len()),
        ("queries", inputs.queries.len()),
        ("keys", inputs.keys.len()),
    ] {
        if len != n {
            return Err(LossError::ShapeMismatch(format!(
                "{name} has {len} rows but logits have {n}"
            )));
        }
    }

    let supervised = if mask.iter().any(|&m| m) {
        cross_entropy(inputs.logits, labels, mask)?
    } else {
        LossValue::new(0.0).with(InputSlot::Logits, Array2::zeros(inputs.logits.dim()))
    };

    let unsupervised = match cfg.unsupervised {
        UnsupervisedKind::None => None,
        UnsupervisedKind::InfoNce => Some(info_nce(inputs.queries, inputs.keys, cfg.tau)?),
        UnsupervisedKind::Pgc => Some(pgc_loss(
            inputs.queries,
            inputs.keys,
            pseudo_labels,
            cfg.tau,
        )?),
    };

    let mut total_value = supervised.value;
    let supervised_value = supervised.value;
    let grad_logits = supervised
        .gradient(InputSlot::Logits)
        .expect("cross-entropy always reports a logits gradient")
        .clone();
    let mut unsupervised_value = 0.0;
    let mut hcr_value = 0.0;
    let mut grad_queries: Option<Array2<f64>> = None;
    let mut grad_keys: Option<Array2<f64>> = None;
    let mut grad_sphere: Option<Array2<f64>> = None;

    if let Some(u) = &unsupervised {
        unsupervised_value = u.value;
        total_value += cfg.lambda_u * u.value;
        grad_queries = Some(
            u.gradient(InputSlot::Queries).expect("queries flow").mapv(|g| g * cfg.lambda_u),
        );
        grad_keys = Some(
            u.gradient(InputSlot::Keys).expect("keys flow").mapv(|g| g * cfg.lambda_u),
        );
    }

    if cfg.hcr.weight > 0.0 {
        let d_g = pairwise_distances(inputs.sphere_logits);
        let d_h = pairwise_distances(inputs.queries);
        let h = hcr_loss(&d_g, &d_h, &cfg.hcr)?;
        hcr_value = h.value;
        total_value += cfg.hcr.weight * h.value;
        let g_dg = h
            .gradient(InputSlot::DgDistances)
            .expect("d_g always flows")
            .mapv(|g| g * cfg.hcr.weight);
        grad_sphere = Some(pairwise_distances_backward(inputs.sphere_logits, &d_g, &g_dg));
        if let Some(g_dh) = h.gradient(InputSlot::DhDistances) {
            let g_dh = g_dh.mapv(|g| g * cfg.hcr.weight);
            let gq = pairwise_distances_backward(inputs.queries, &d_h, &g_dh);
            grad_queries = Some(match grad_queries {
                Some(acc) => acc + gq,
                None => gq,
            });
        }
    }

    // Cross-entropy always flows into the logits; with nothing labeled the
    // gradient is a zero matrix rather than an absent slot.
    let mut total = LossValue::new(total_value).with(InputSlot::Logits, grad_logits);
    if let Some(g) = grad_sphere {
        total = total.with(InputSlot::SphereLogits, g);
    }
    if let Some(g) = grad_queries {
        total = total.with(InputSlot::Queries, g);
    }
    if let Some(g) = grad_keys {
        total = total.with(InputSlot::Keys, g);
    }
    Ok(CompositeLoss {
        total,
        supervised: supervised_value,
        unsupervised: unsupervised_value,
        hcr: hcr_value,
    })
}
