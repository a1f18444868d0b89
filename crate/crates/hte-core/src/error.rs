//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Arrays disagree on length, or contain non-finite entries.
    #[error("structural error: {0}")]
    Structural(String),

    /// A three-way split cannot be formed from the available rows.
    #[error("infeasible split: {0}")]
    InfeasibleSplit(String),

    /// An estimator required both treatment arms and one is empty.
    #[error("positivity violation: {0}")]
    Positivity(String),

    /// A metric is undefined on the given input (e.g. one-class AUROC).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// The treatment residuals carry no signal; the effect is unidentified.
    #[error("identification error: {0}")]
    Identification(String),

    /// A base learner could not be fit.
    #[error("fit error: {0}")]
    Fit(String),

    /// Neural-network training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    /// Invalid configuration (bad hyperparameter range, inconsistent references).
    #[error("invalid config: {0}")]
    Config(String),

    /// Cohort pipeline failures (e.g. zero retained covariate columns).
    #[error("pipeline error: {0}")]
    Pipeline(String),

    /// Weighted subsampling emptied a treatment arm.
    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
