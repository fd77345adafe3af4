//! Feed-forward binary classifier over keyword encodings.
//!
//! `k -> h1 -> h2 -> 1` fully connected layers, ReLU between them and a
//! logistic output giving the anomaly probability. Trained with weighted
//! binary cross-entropy and AdamW under k-fold cross-validation with early
//! stopping.

use alloc::string::String;

use crate::dataset::Label;

mod loss;
mod network;
mod optim;
mod train;

pub use loss::{compute_pos_weight, mean_loss, weighted_bce, PROB_CLAMP};
pub use network::{Dense, Gradients, LayerGradients, Mlp};
pub use optim::{adamw_step, AdamWConfig, OptimizerState};
pub use train::{predict, train, FoldReport, TrainConfig, TrainedModel};

/// One labeled input row.
pub type Example<'a> = (&'a [f64], Label);

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ClassifierError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value {0} outside the loss domain")]
    DomainError(f64),
    #[error("training labels contain a single class")]
    DegenerateLabels,
    #[error("not enough {label} samples: have {have}, need at least {need}")]
    InsufficientSamples { label: Label, have: usize, need: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("encoding came from keyword model {got:016x}, classifier was trained on {expected:016x}")]
    ModelEncodingMismatch { expected: u64, got: u64 },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}
