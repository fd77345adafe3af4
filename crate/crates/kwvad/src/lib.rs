//! Command-line pipeline for keyword-based video anomaly detection: dataset
//! manifests, the frame-description provider and its cache, artifact
//! formats and the `kwvad` commands. The numerical core lives in
//! `kwvad-core`.

pub mod config;
pub mod describer;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod pipeline;

pub use config::{Overrides, PipelineConfig, Profile};
pub use error::{Error, Result, Stage};
pub use pipeline::{Layout, Pipeline, Prediction};
