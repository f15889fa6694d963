//! A minimal differentiable MLP with explicit reverse-mode gradients.
//!
//! Three blocks share an encoder trunk:
//!
//! ```text
//! x ──► encoder f (affine+activation per hidden width, final affine) ──► features
//!            features ──► classifier g (affine) ──► logits
//!            features ──► projection h (affine, activation, affine, normalize) ──► S^{D_h-1}
//! ```
//!
//! There is no autodiff tape; [`backward`] walks the cached
//! [`ForwardRecord`] in reverse, applying each layer's transpose and the
//! sphere-projection Jacobian `(I - uuᵀ)/‖v‖` for the projection head's
//! final normalization. The trainer's losses hand it upstream gradients for
//! any subset of `{logits, projections, features}`.
//!
//! All math is f64. Parameter initialization, updates, and checkpoints are
//! deterministic: the same seed reproduces the same bits.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project_to_sphere, project_to_sphere_backward, GeometryError, UnitSphereBatch};
use crate::numfmt::format_f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid network configuration: {0}")]
    ConfigError(String),
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation. ReLU uses the zero
    /// subgradient at the kink.
    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - pre.tanh().powi(2),
        }
    }
}

/// Architecture description. `encoder_widths` are the hidden widths; the
/// encoder always ends with a linear map into `feature_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Output dimension of the projection head; at least 2, since a 0-sphere
    /// has no geometry worth regularizing.
    pub projection_dim: usize,
    pub activation: Activation,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 || self.feature_dim == 0 {
            return Err(NetError::ConfigError(
                "input and feature dimensions must be positive".into(),
            ));
        }
        if self.num_classes < 2 {
            return Err(NetError::ConfigError(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.projection_dim < 2 {
            return Err(NetError::ConfigError(format!(
                "projection_dim must be at least 2, got {}",
                self.projection_dim
            )));
        }
        if self.encoder_widths.contains(&0) {
            return Err(NetError::ConfigError("encoder widths must be positive".into()));
        }
        Ok(())
    }

    /// Encoder affine dimensions: input → widths… → feature_dim.
    fn encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.encoder_widths);
        dims.push(self.feature_dim);
        dims
    }
}

/// One affine layer `y = x·W + b`, weight stored input-major: `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// All learnable parameters. The same structure doubles as the gradient and
/// velocity container, so the optimizer walks parameter, gradient, and state
/// in lockstep.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub encoder: Vec<Layer>,
    pub classifier: Layer,
    /// Two affines around one activation: feature_dim → feature_dim → projection_dim.
    pub projection: [Layer; 2],
}

impl NetworkParams {
    pub fn zeros(cfg: &NetworkConfig) -> Result<Self, NetError> {
        cfg.validate()?;
        let dims = cfg.encoder_dims();
        let encoder = dims
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(Self {
            encoder,
            classifier: Layer::zeros(cfg.feature_dim, cfg.num_classes),
            projection: [
                Layer::zeros(cfg.feature_dim, cfg.feature_dim),
                Layer::zeros(cfg.feature_dim, cfg.projection_dim),
            ],
        })
    }

    /// All layers in a fixed order: encoder stack, classifier, projection.
    pub fn layers(&self) -> Vec<&Layer> {
        let mut out: Vec<&Layer> = self.encoder.iter().collect();
        out.push(&self.classifier);
        out.push(&self.projection[0]);
        out.push(&self.projection[1]);
        out
    }

    pub fn layers_mut(&mut self) -> Vec<&mut Layer> {
        let mut out: Vec<&mut Layer> = self.encoder.iter_mut().collect();
        out.push(&mut self.classifier);
        let [p0, p1] = &mut self.projection;
        out.push(p0);
        out.push(p1);
        out
    }

    /// Elementwise `self += other`, used to merge gradients from the two
    /// augmented views.
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.layers_mut().into_iter().zip(other.layers()) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }
}

/// Draws weights from a zero-mean Gaussian with standard deviation
/// `1/sqrt(fan_in)`; biases start at zero. Deterministic per seed.
pub fn init_params(cfg: &NetworkConfig, seed: u64) -> Result<NetworkParams, NetError> {
    let mut params = NetworkParams::zeros(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in params.layers_mut() {
        let fan_in = layer.weight.nrows();
        let normal = Normal::new(0.0, 1.0 / (fan_in as f64).sqrt())
            .expect("positive standard deviation");
        for w in layer.weight.iter_mut() {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Everything the backward pass needs, cached by [`forward`].
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    pub input: Array2<f64>,
    /// Pre-activation values of each encoder affine.
    pub encoder_pre: Vec<Array2<f64>>,
    /// Post-activation values (the last entry is `features`).
    pub encoder_post: Vec<Array2<f64>>,
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
    pub projection_hidden_pre: Array2<f64>,
    pub projection_hidden_post: Array2<f64>,
    /// Projection output before normalization.
    pub projection_raw: Array2<f64>,
    pub projections: UnitSphereBatch,
}

fn check_input(cfg: &NetworkConfig, x: &Array2<f64>) -> Result<(), NetError> {
    if x.ncols() != cfg.input_dim {
        return Err(NetError::ShapeMismatch(format!(
            "input has {} columns but the network expects {}",
            x.ncols(),
            cfg.input_dim
        )));
    }
    Ok(())
}

fn encoder_forward(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    x: &Array2<f64>,
) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
    let last = params.encoder.len() - 1;
    let mut pre = Vec::with_capacity(params.encoder.len());
    let mut post = Vec::with_capacity(params.encoder.len());
    let mut current = x.clone();
    for (i, layer) in params.encoder.iter().enumerate() {
        let z = layer.forward(&current);
        // Hidden layers are activated; the final map into feature space is linear.
        let a = if i < last {
            z.mapv(|v| cfg.activation.apply(v))
        } else {
            z.clone()
        };
        pre.push(z);
        current = a.clone();
        post.push(a);
    }
    (pre, post)
}

/// Full forward pass. Fails with a propagated [`GeometryError::ZeroVector`]
/// if any projection-head output row degenerates to (near) zero before
/// normalization, e.g. with all-zero parameters.
pub fn forward(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    x: &Array2<f64>,
) -> Result<ForwardRecord, NetError> {
    cfg.validate()?;
    check_input(cfg, x)?;
    let (encoder_pre, encoder_post) = encoder_forward(cfg, params, x);
    let features = encoder_post.last().expect("encoder has layers").clone();
    let logits = params.classifier.forward(&features);
    let hidden_pre = params.projection[0].forward(&features);
    let hidden_post = hidden_pre.mapv(|v| cfg.activation.apply(v));
    let raw = params.projection[1].forward(&hidden_post);
    let projections = project_to_sphere(&raw)?;
    Ok(ForwardRecord {
        input: x.clone(),
        encoder_pre,
        encoder_post,
        features,
        logits,
        projection_hidden_pre: hidden_pre,
        projection_hidden_post: hidden_post,
        projection_raw: raw,
        projections,
    })
}

/// Features and logits only: skips the projection head, so it cannot hit
/// [`GeometryError::ZeroVector`]. Used for evaluation.
pub fn forward_logits(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    x: &Array2<f64>,
) -> Result<Array2<f64>, NetError> {
    cfg.validate()?;
    check_input(cfg, x)?;
    let (_, encoder_post) = encoder_forward(cfg, params, x);
    let features = encoder_post.last().expect("encoder has layers");
    Ok(params.classifier.forward(features))
}

/// Upstream gradients for [`backward`]; any subset may be present.
/// `projections` is w.r.t. the *normalized* projection rows.
#[derive(Debug, Clone, Default)]
pub struct UpstreamGradients {
    pub logits: Option<Array2<f64>>,
    pub projections: Option<Array2<f64>>,
    pub features: Option<Array2<f64>>,
}

/// Exact reverse-mode pass. Returns parameter gradients in the same
/// structure as [`NetworkParams`].
pub fn backward(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    record: &ForwardRecord,
    upstream: &UpstreamGradients,
) -> Result<NetworkParams, NetError> {
    let batch = record.input.nrows();
    let mut grads = NetworkParams::zeros(cfg)?;
    let mut d_features: Array2<f64> = match &upstream.features {
        Some(g) => {
            if g.dim() != record.features.dim() {
                return Err(NetError::ShapeMismatch(
                    "features gradient does not match the forward record".into(),
                ));
            }
            g.clone()
        }
        None => Array2::zeros(record.features.dim()),
    };

    if let Some(d_logits) = &upstream.logits {
        if d_logits.dim() != record.logits.dim() {
            return Err(NetError::ShapeMismatch(
                "logits gradient does not match the forward record".into(),
            ));
        }
        grads.classifier.weight = record.features.t().dot(d_logits);
        grads.classifier.bias = d_logits.sum_axis(Axis(0));
        d_features += &d_logits.dot(&params.classifier.weight.t());
    }

    if let Some(d_proj) = &upstream.projections {
        if d_proj.dim() != record.projection_raw.dim() {
            return Err(NetError::ShapeMismatch(
                "projections gradient does not match the forward record".into(),
            ));
        }
        // Through the normalization: rows come back tangent to the sphere.
        let d_raw = project_to_sphere_backward(&record.projection_raw, d_proj)?;
        grads.projection[1].weight = record.projection_hidden_post.t().dot(&d_raw);
        grads.projection[1].bias = d_raw.sum_axis(Axis(0));
        let d_hidden_post = d_raw.dot(&params.projection[1].weight.t());
        let mut d_hidden_pre = d_hidden_post;
        for (g, &z) in d_hidden_pre
            .iter_mut()
            .zip(record.projection_hidden_pre.iter())
        {
            *g *= cfg.activation.derivative(z);
        }
        grads.projection[0].weight = record.features.t().dot(&d_hidden_pre);
        grads.projection[0].bias = d_hidden_pre.sum_axis(Axis(0));
        d_features += &d_hidden_pre.dot(&params.projection[0].weight.t());
    }

    // Encoder, last layer (linear) down to the first.
    let last = params.encoder.len() - 1;
    let mut d_post = d_features;
    for i in (0..params.encoder.len()).rev() {
        let mut d_pre = d_post;
        if i < last {
            for (g, &z) in d_pre.iter_mut().zip(record.encoder_pre[i].iter()) {
                *g *= cfg.activation.derivative(z);
            }
        }
        let layer_input = if i == 0 {
            &record.input
        } else {
            &record.encoder_post[i - 1]
        };
        debug_assert_eq!(layer_input.nrows(), batch);
        grads.encoder[i].weight = layer_input.t().dot(&d_pre);
        grads.encoder[i].bias = d_pre.sum_axis(Axis(0));
        d_post = d_pre.dot(&params.encoder[i].weight.t());
    }
    Ok(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(NetError::ConfigError(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(NetError::ConfigError(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// Velocity buffers for SGD with momentum, zero until the first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub velocity: NetworkParams,
}

impl OptimizerState {
    pub fn new(cfg: &NetworkConfig) -> Result<Self, NetError> {
        Ok(Self {
            velocity: NetworkParams::zeros(cfg)?,
        })
    }
}

/// Heavy-ball SGD: `v ← momentum·v + g`, then `θ ← θ - lr·v`.
pub fn sgd_momentum_step(
    params: &mut NetworkParams,
    grads: &NetworkParams,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) -> Result<(), NetError> {
    cfg.validate()?;
    for ((p, g), v) in params
        .layers_mut()
        .into_iter()
        .zip(grads.layers())
        .zip(state.velocity.layers_mut())
    {
        if p.weight.dim() != g.weight.dim() {
            return Err(NetError::ShapeMismatch(
                "gradient layout does not match parameters".into(),
            ));
        }
        v.weight.zip_mut_with(&g.weight, |vel, &grad| {
            *vel = cfg.momentum * *vel + grad;
        });
        v.bias.zip_mut_with(&g.bias, |vel, &grad| {
            *vel = cfg.momentum * *vel + grad;
        });
        p.weight.zip_mut_with(&v.weight, |par, &vel| {
            *par -= cfg.learning_rate * vel;
        });
        p.bias.zip_mut_with(&v.bias, |par, &vel| {
            *par -= cfg.learning_rate * vel;
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints: named shape-tagged arrays in JSON, every value written with 17
// significant digits so save → load restores the exact parameter bits.

#[derive(Serialize, Deserialize)]
struct NamedArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct CheckpointFile {
    format: String,
    network: NetworkConfig,
    arrays: Vec<NamedArray>,
}

const CHECKPOINT_FORMAT: &str = "hcr-checkpoint-v1";

fn layer_names(cfg: &NetworkConfig) -> Vec<String> {
    let mut names: Vec<String> = (0..=cfg.encoder_widths.len())
        .map(|i| format!("encoder.{i}"))
        .collect();
    names.push("classifier".into());
    names.push("projection.0".into());
    names.push("projection.1".into());
    names
}

/// Serializes a checkpoint to JSON text.
pub fn checkpoint_to_json(cfg: &NetworkConfig, params: &NetworkParams) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    out.push_str(&format!("  \"format\": \"{CHECKPOINT_FORMAT}\",\n"));
    out.push_str(&format!(
        "  \"network\": {},\n",
        serde_json::to_string(cfg).expect("config serializes")
    ));
    out.push_str("  \"arrays\": [\n");
    let names = layer_names(cfg);
    let layers = params.layers();
    let mut entries = Vec::new();
    for (name, layer) in names.iter().zip(layers) {
        let (rows, cols) = layer.weight.dim();
        entries.push(render_array(
            &format!("{name}.weight"),
            &[rows, cols],
            layer.weight.iter(),
        ));
        entries.push(render_array(
            &format!("{name}.bias"),
            &[layer.bias.len()],
            layer.bias.iter(),
        ));
    }
    out.push_str(&entries.join(",\n"));
    out.push_str("\n  ]\n}\n");
    out
}

fn render_array<'a>(name: &str, shape: &[usize], data: impl Iterator<Item = &'a f64>) -> String {
    let shape_text = shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let data_text = data.map(|&v| format_f64(v)).collect::<Vec<_>>().join(", ");
    format!("    {{\"name\": \"{name}\", \"shape\": [{shape_text}], \"data\": [{data_text}]}}")
}

/// Parses a checkpoint, validating names and shapes against the embedded
/// network configuration.
pub fn checkpoint_from_json(text: &str) -> Result<(NetworkConfig, NetworkParams), NetError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(NetError::Checkpoint(format!(
            "unsupported format {:?}",
            file.format
        )));
    }
    file.network.validate().map_err(|e| match e {
        NetError::ConfigError(msg) => NetError::Checkpoint(msg),
        other => other,
    })?;
    let mut params = NetworkParams::zeros(&file.network)?;
    let names = layer_names(&file.network);
    let mut arrays: std::collections::BTreeMap<String, NamedArray> = file
        .arrays
        .into_iter()
        .map(|a| (a.name.clone(), a))
        .collect();
    for (name, layer) in names.iter().zip(params.layers_mut()) {
        let w = arrays
            .remove(&format!("{name}.weight"))
            .ok_or_else(|| NetError::Checkpoint(format!("missing array {name}.weight")))?;
        let (rows, cols) = layer.weight.dim();
        if w.shape != [rows, cols] || w.data.len() != rows * cols {
            return Err(NetError::Checkpoint(format!(
                "array {name}.weight has shape {:?}, expected [{rows}, {cols}]",
                w.shape
            )));
        }
        layer.weight = Array2::from_shape_vec((rows, cols), w.data)
            .map_err(|e| NetError::Checkpoint(e.to_string()))?;
        let b = arrays
            .remove(&format!("{name}.bias"))
            .ok_or_else(|| NetError::Checkpoint(format!("missing array {name}.bias")))?;
        if b.shape != [layer.bias.len()] || b.data.len() != layer.bias.len() {
            return Err(NetError::Checkpoint(format!(
                "array {name}.bias has shape {:?}, expected [{}]",
                b.shape,
                layer.bias.len()
            )));
        }
        layer.bias = Array1::from_vec(b.data);
    }
    if let Some(stray) = arrays.keys().next() {
        return Err(NetError::Checkpoint(format!("unexpected array {stray}")));
    }
    Ok((file.network, params))
}

/// Writes a checkpoint file.
pub fn save_checkpoint(
    path: &std::path::Path,
    cfg: &NetworkConfig,
    params: &NetworkParams,
) -> Result<(), NetError> {
    std::fs::write(path, checkpoint_to_json(cfg, params))
        .map_err(|e| NetError::Checkpoint(format!("writing {}: {e}", path.display())))
}

/// Reads a checkpoint file.
pub fn load_checkpoint(path: &std::path::Path) -> Result<(NetworkConfig, NetworkParams), NetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| NetError::Checkpoint(format!("reading {}: {e}", path.display())))?;
    checkpoint_from_json(&text)
}
