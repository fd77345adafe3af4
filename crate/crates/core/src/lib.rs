//! Keyword-weighted, frame-level video anomaly detection.
//!
//! This crate holds the pure algorithmic half of the pipeline and builds
//! without `std` (it needs `alloc`):
//!
//! * [`dataset`]: frame records, seeded induction sampling and train/test splits.
//! * [`text`]: tokenizer and the built-in stop-word list.
//! * [`induction`]: two-document TF-IDF and the normalized keyword weight vector.
//! * [`deduction`]: presence-based keyword encoding of a single description.
//! * [`classifier`]: three-layer feed-forward network, weighted BCE, AdamW,
//!   k-fold training with early stopping.
//! * [`metrics`]: micro/macro AUROC and thresholded confusion counts.
//!
//! IO, the description provider client, file formats and the CLI live in the
//! companion `kwvad` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod dataset;
pub mod deduction;
pub mod hash;
pub mod induction;
pub mod metrics;
pub mod rng;
pub mod text;

pub use classifier::{Mlp, TrainConfig, TrainedModel};
pub use dataset::{Dataset, FrameRecord, Label, SplitAssignment};
pub use deduction::{Encoder, Encoding};
pub use induction::{KeywordModel, VectorizerConfig};
pub use metrics::EvalReport;
