//! Estimation of the post-mortem interval (PMI, hours since death) from
//! forensic iris images.
//!
//! The crate covers the full experiment lifecycle:
//!
//! - [`manifest`]: dataset data model, CSV/JSON manifest parsing, NIR/RGB
//!   pairing into multispectral records, and PMI distribution summaries.
//! - [`preprocess`]: iris-centered square crops and training-time
//!   augmentation.
//! - [`protocol`]: deterministic train/test split plans for sample-disjoint,
//!   subject-disjoint, and cross-dataset evaluation, plus a split auditor.
//! - [`balance`]: 18-class PMI binning and the two training-set balancing
//!   strategies (real up-sampling and synthetic supplementation).
//! - [`synth`]: synthetic-image inventories and a procedural stub generator
//!   for desk-scale experiments.
//! - [`model`]: narrow-band regression backbones and the multispectral
//!   fusion head over concatenated NIR/RGB embeddings.
//! - [`trainer`]: Adam training loop, prediction, and checkpoints.
//! - [`evaluate`]: RMSE/MAE metrics, cross-fold aggregation, and plot
//!   artifacts with machine-readable sidecars.

pub mod balance;
pub mod dataset;
pub mod error;
pub mod evaluate;
pub mod manifest;
pub mod model;
pub mod nn;
pub mod plot;
pub mod preprocess;
pub mod protocol;
pub mod raster;
pub mod stats;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
