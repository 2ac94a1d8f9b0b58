// SPDX-License-Identifier: MIT OR Apache-2.0

//! Benchmark toolkit for change point detection.
//!
//! Offline detectors (AMOC, binary segmentation, segment neighbourhoods,
//! PELT), Bayesian online change point detection, multi-annotator
//! evaluation metrics, a Default/Oracle experiment harness, rank-based
//! statistical comparison, and an annotator-agreement null model.

pub mod analysis;
pub mod annosim;
pub mod bocpd;
pub mod costs;
pub mod data;
pub mod detect;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod synth;

pub use data::{AnnotationDb, ChangePointSet, IndexBase, Segmentation, TimeSeries};
pub use error::{Error, Result};
