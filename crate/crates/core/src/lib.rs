//! Recurrence-prediction toolkit for colorectal liver metastases.
//!
//! The crate covers the full analysis pipeline on tabular cohorts and CT
//! volumes: synthetic cohort generation, radiomic feature extraction,
//! leakage-safe preprocessing, from-scratch classifiers with soft-voting
//! ensembles, discrimination metrics with bootstrap confidence intervals,
//! survival statistics and decision curve analysis. Everything is
//! deterministic given a seed, and fitted objects are immutable so they can
//! be shared across threads.

pub mod dca;
pub mod error;
pub mod eval;
pub mod math;
pub mod models;
pub mod plot;
pub mod preprocess;
pub mod radiomics;
pub mod stats;
pub mod survival;
pub mod tabular;
pub mod workflow;

pub use error::{Error, Result};
