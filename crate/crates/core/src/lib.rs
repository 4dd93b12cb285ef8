// SPDX-License-Identifier: MIT OR Apache-2.0

//! # freqlens
//!
//! Measures how term frequency in a pretraining-style corpus relates to the
//! linearity of a model's relational computation, and inverts that relation
//! to estimate frequencies from model measurements.
//!
//! - [`corpus`]: exact multi-pattern counting of term occurrences and
//!   within-sequence co-occurrences over tokenized batches, with
//!   checkpoint-cumulative and document-window modes.
//! - [`lre`]: linear relational embeddings fitted from averaged Jacobians,
//!   with faithfulness and causality metrics and hyperparameter sweeps.
//! - [`regress`]: random-forest regression from LRE quality features to log
//!   frequency, with cross-validation, baselines and permutation importance.
//! - [`pipeline`]: config-driven, digest-cached experiment runs and reports.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod lre;
pub mod pipeline;
pub mod regress;

pub use error::{Error, Result};
