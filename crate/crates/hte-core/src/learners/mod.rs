//! From-scratch supervised base learners: regularized linear regression,
//! logistic regression, a bagged tree ensemble, boosted stumps, and a small
//! feed-forward network with verified gradients.
//!
//! Every estimator in the crate plugs these in through [`LearnerSpec`];
//! fitting is deterministic under the spec's seed, and fitted models are
//! immutable and shareable.

mod boost;
mod linear;
mod logistic;
mod mlp;
mod tree;

pub use boost::{BoostSpec, BoostedTrees};
pub use linear::{LinearModel, LinearSpec};
pub use logistic::{LogisticModel, LogisticSpec};
pub use mlp::{gradient_check, output_layer_gradient, InitKind, MlpNet, MlpSpec};
pub use tree::Tree;
pub use tree::{Forest, ForestSpec};

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::RngSeed;

/// Configuration of a base learner. Unknown JSON keys are rejected at parse
/// time; hyperparameter ranges are checked by [`LearnerSpec::validate`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerSpec {
    Linear(LinearSpec),
    Logistic(LogisticSpec),
    Forest(ForestSpec),
    BoostedStumps(BoostSpec),
    Mlp(MlpSpec),
}

impl LearnerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LearnerSpec::Linear(_) => "linear",
            LearnerSpec::Logistic(_) => "logistic",
            LearnerSpec::Forest(_) => "forest",
            LearnerSpec::BoostedStumps(_) => "boosted-stumps",
            LearnerSpec::Mlp(_) => "mlp",
        }
    }

    pub fn seed(&self) -> RngSeed {
        RngSeed(match self {
            LearnerSpec::Linear(s) => s.seed,
            LearnerSpec::Logistic(s) => s.seed,
            LearnerSpec::Forest(s) => s.seed,
            LearnerSpec::BoostedStumps(s) => s.seed,
            LearnerSpec::Mlp(s) => s.seed,
        })
    }

    /// Copy of the spec with its seed replaced; estimators use this to hand
    /// derived seeds to internal fits.
    pub fn with_seed(&self, seed: RngSeed) -> Self {
        let mut spec = self.clone();
        match &mut spec {
            LearnerSpec::Linear(s) => s.seed = seed.0,
            LearnerSpec::Logistic(s) => s.seed = seed.0,
            LearnerSpec::Forest(s) => s.seed = seed.0,
            LearnerSpec::BoostedStumps(s) => s.seed = seed.0,
            LearnerSpec::Mlp(s) => s.seed = seed.0,
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Linear(s) => s.validate(),
            LearnerSpec::Logistic(s) => s.validate(),
            LearnerSpec::Forest(s) => s.validate(),
            LearnerSpec::BoostedStumps(s) => s.validate(),
            LearnerSpec::Mlp(s) => s.validate(),
        }
    }
}

/// A fitted regression model: covariate row -> real prediction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedRegressor {
    Linear(LinearModel),
    Forest(Forest),
    BoostedStumps(BoostedTrees),
    Mlp(MlpNet),
}

impl FittedRegressor {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            FittedRegressor::Linear(m) => m.predict_row(x),
            FittedRegressor::Forest(m) => m.predict_row(x),
            FittedRegressor::BoostedStumps(m) => m.predict_row(x),
            FittedRegressor::Mlp(m) => m.predict_row(x),
        }
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        Array1::from_iter(x.rows().into_iter().map(|r| self.predict_row(r)))
    }
}

/// A fitted classifier: covariate row -> probability in [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum FittedClassifier {
    Logistic(LogisticModel),
    Forest(Forest),
    BoostedStumps(BoostedTrees),
    Mlp(MlpNet),
}

impl FittedClassifier {
    pub fn predict_proba_row(&self, x: ArrayView1<f64>) -> f64 {
        let p = match self {
            FittedClassifier::Logistic(m) => m.predict_proba_row(x),
            FittedClassifier::Forest(m) => m.predict_row(x),
            FittedClassifier::BoostedStumps(m) => sigmoid(m.predict_row(x)),
            FittedClassifier::Mlp(m) => sigmoid(m.predict_row(x)),
        };
        p.clamp(0.0, 1.0)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Array1<f64> {
        Array1::from_iter(x.rows().into_iter().map(|r| self.predict_proba_row(r)))
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_fit_input(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Fit("cannot fit on zero rows".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Fit(format!(
            "{} rows vs {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite training values".into()));
    }
    Ok(())
}

/// Fit a regression learner. `boosted-stumps`, `forest`, `linear` and `mlp`
/// are valid regressor kinds.
pub fn fit_regressor(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
) -> Result<FittedRegressor> {
    fit_regressor_weighted(spec, x, y, None)
}

/// Weighted variant; `weights` must be nonnegative with a positive sum.
pub fn fit_regressor_weighted(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<FittedRegressor> {
    spec.validate()?;
    check_fit_input(x, y)?;
    check_weights(weights, x.nrows())?;
    match spec {
        LearnerSpec::Linear(s) => Ok(FittedRegressor::Linear(linear::fit(s, x, y, weights)?)),
        LearnerSpec::Forest(s) => Ok(FittedRegressor::Forest(tree::fit_forest(s, x, y, weights)?)),
        LearnerSpec::BoostedStumps(s) => Ok(FittedRegressor::BoostedStumps(boost::fit_regressor(
            s, x, y, weights,
        )?)),
        LearnerSpec::Mlp(s) => Ok(FittedRegressor::Mlp(mlp::fit(s, x, y, weights, false)?)),
        LearnerSpec::Logistic(_) => Err(Error::Config(
            "logistic is a classifier kind, not a regressor".into(),
        )),
    }
}

/// Fit a classification learner on 0/1 labels. `logistic`, `forest`,
/// `boosted-stumps` and `mlp` are valid classifier kinds.
pub fn fit_classifier(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    labels: ArrayView1<f64>,
) -> Result<FittedClassifier> {
    fit_classifier_weighted(spec, x, labels, None)
}

pub fn fit_classifier_weighted(
    spec: &LearnerSpec,
    x: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<FittedClassifier> {
    spec.validate()?;
    check_fit_input(x, labels)?;
    check_weights(weights, x.nrows())?;
    if labels.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::Fit("classifier labels must be 0 or 1".into()));
    }
    match spec {
        LearnerSpec::Logistic(s) => Ok(FittedClassifier::Logistic(logistic::fit(
            s, x, labels, weights,
        )?)),
        LearnerSpec::Forest(s) => Ok(FittedClassifier::Forest(tree::fit_forest(
            s, x, labels, weights,
        )?)),
        LearnerSpec::BoostedStumps(s) => Ok(FittedClassifier::BoostedStumps(
            boost::fit_classifier(s, x, labels, weights)?,
        )),
        LearnerSpec::Mlp(s) => Ok(FittedClassifier::Mlp(mlp::fit(
            s, x, labels, weights, true,
        )?)),
        LearnerSpec::Linear(_) => Err(Error::Config(
            "linear is a regressor kind, not a classifier".into(),
        )),
    }
}

fn check_weights(weights: Option<&Array1<f64>>, n: usize) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Fit(format!("{} weights for {n} rows", w.len())));
        }
        if w.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Fit("weights must be finite and nonnegative".into()));
        }
        if w.sum() <= 0.0 {
            return Err(Error::Fit("weights sum to zero".into()));
        }
    }
    Ok(())
}

/// Versioned JSON artifact wrapper for fitted models.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelArtifact<M> {
    pub version: u32,
    pub model: M,
}

pub const MODEL_ARTIFACT_VERSION: u32 = 1;

/// Serialize a fitted model to the versioned JSON artifact format.
pub fn save_model<M: Serialize>(model: &M, path: &std::path::Path) -> Result<()> {
    let artifact = ModelArtifact {
        version: MODEL_ARTIFACT_VERSION,
        model,
    };
    crate::io::atomic_write(path, &serde_json::to_vec(&artifact)?)
}

/// Load a fitted model written by [`save_model`].
pub fn load_model<M: for<'de> Deserialize<'de>>(path: &std::path::Path) -> Result<M> {
    let bytes = std::fs::read(path)?;
    let artifact: ModelArtifact<M> = serde_json::from_slice(&bytes)?;
    if artifact.version != MODEL_ARTIFACT_VERSION {
        return Err(Error::Config(format!(
            "unsupported model artifact version {}",
            artifact.version
        )));
    }
    Ok(artifact.model)
}
