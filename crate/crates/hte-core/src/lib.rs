//! Heterogeneous treatment-effect estimation toolkit: IPTW, cross-fitted
//! residualization, S/T/X meta-learners, balanced-representation neural
//! estimators, ground-truth-free validation metrics (ERMSE, influence-
//! corrected PEHE), feature attribution, and a claim-style target-trial
//! cohort pipeline over synthetic data.

pub mod cohort;
pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub(crate) mod folds;
pub mod importance;
pub mod io;
pub mod learners;
pub(crate) mod linalg;
pub mod metalearners;
pub(crate) mod nn;
pub mod propensity;
pub mod replearn;
pub mod seed;
pub mod split;
pub mod synth;

pub use data::{GroundTruth, ObservationalDataset, ValidationReport};
pub use error::{Error, Result};
pub use estimator::{CateEstimator, EstimatorConfig, FittedCate};
pub use seed::RngSeed;
pub use split::{split, SplitIndices};
