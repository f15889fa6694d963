//! Numerical workbench for hyperspherical consistency regularization (HCR).
//!
//! HCR couples the pairwise distance structure of a classifier's sphere-projected
//! logits with that of a projection head through a binary cross-entropy between
//! Gaussian similarities. This crate provides everything needed to study that
//! objective at desk scale in pure Rust:
//!
//! - [`geometry`]: unit-sphere batches, pairwise distances, histograms
//! - [`losses`]: Gaussian similarity, HCR, cross-entropy, InfoNCE, PGC, and the
//!   composite objective, each with analytic gradients
//! - [`diffnet`]: a small MLP (encoder, classifier head, projection head) with
//!   explicit reverse-mode gradients and SGD-momentum updates
//! - [`data`]: synthetic datasets, CSV ingestion, label masking, label noise,
//!   and augmentation
//! - [`trainer`]: batched semi-supervised training loop, evaluation, and the
//!   distance-distribution consistency diagnostic
//! - [`theory`]: Monte-Carlo checks of the distance-concentration, random
//!   projection, and mutual-information invariance predictions
//!
//! Everything is f64, single-threaded, and deterministic per seed: two runs with
//! the same configuration produce bit-identical artifacts.

pub mod data;
pub mod diffnet;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod numfmt;
pub mod theory;
pub mod tolerances;
pub mod trainer;

pub use data::{AugmentSpec, DataError, LabeledDataset, LoadedCsv, NoiseKind, NoiseSpec};
pub use diffnet::{
    Activation, ForwardRecord, NetError, NetworkConfig, NetworkParams, OptimizerConfig,
    OptimizerState, UpstreamGradients,
};
pub use geometry::{DistanceMatrix, GeometryError, Histogram, UnitSphereBatch};
pub use losses::{
    CompositeConfig, CompositeInputs, CompositeLoss, GradientFlow, HcrConfig, InputSlot,
    LossError, LossValue, SimilarityConfig, SimilarityMatrix, UnsupervisedKind,
};
pub use theory::{
    DistanceStats, JlReport, LinearMapKind, MiEstimate, MiInvarianceReport, TheoryError,
};
pub use trainer::{
    DistanceConsistency, MetricsRecord, Precision, TrainConfig, TrainError, TrainOutput,
};
