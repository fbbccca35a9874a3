//! Hierarchy-aware novel fault detection for softmax classifiers.
//!
//! The crate trains small feed-forward classifiers with soft-label
//! regularization derived from a fault taxonomy, scores test samples with
//! flat and hierarchically consistent detector statistics (MSP, ODIN, DMD),
//! calibrates detection thresholds, and runs leave-one-class-out experiment
//! sweeps with AUROC evaluation and report rendering.

// `!(x > 0.0)` is the NaN-rejecting validity check throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod config;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod harness;
pub mod linalg;
pub mod report;
pub mod scores;
pub mod taxonomy;

pub use error::{Error, Result};
