//! Meta-learners: S-, T-, X-learners and the cross-fitted residualization
//! estimator (R/DML). Each produces a [`CateModel`] mapping a covariate row
//! to an estimated effect τ̂(x).

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::folds::assign_folds;
use crate::learners::{
    fit_classifier, fit_regressor, fit_regressor_weighted, FittedClassifier, FittedRegressor,
    LearnerSpec, LogisticSpec,
};
use crate::seed::RngSeed;

/// X-learner mixing weight w(x): the treated-arm effect model gets weight
/// 1-w, the control-arm model w.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum XWeight {
    /// Estimated propensity score (the default).
    #[default]
    Propensity,
    /// Fixed constant in [0, 1].
    Constant { value: f64 },
}

/// Effect stage of the residualization estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EffectKind {
    /// Constant effect: the intercept-free least-squares projection of the
    /// outcome residual onto the treatment residual.
    Ols,
    /// Heterogeneous effect fit by a learner minimizing Σ(Ŷ - τ(X)·T̂)².
    Flexible { spec: LearnerSpec },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CateMetadata {
    pub family: String,
    pub description: String,
    pub seed: u64,
    /// Full base-learner specs as fit (records preprocessing choices such
    /// as linear-model standardization).
    pub base_specs: Vec<LearnerSpec>,
}

/// A fitted effect model. Prediction is a pure function of fitted state.
#[derive(Debug)]
pub struct CateModel {
    state: CateState,
    pub metadata: CateMetadata,
}

#[derive(Debug)]
enum CateState {
    S {
        model: FittedRegressor,
    },
    T {
        mu0: FittedRegressor,
        mu1: FittedRegressor,
    },
    X {
        tau0: FittedRegressor,
        tau1: FittedRegressor,
        weight: FittedWeight,
    },
    Rdml {
        effect: EffectState,
    },
}

#[derive(Debug)]
enum FittedWeight {
    Constant(f64),
    Propensity(FittedClassifier),
}

#[derive(Debug)]
enum EffectState {
    Constant(f64),
    Flexible(FittedRegressor),
}

impl CateModel {
    pub fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64 {
        match &self.state {
            CateState::S { model } => {
                let mut row: Vec<f64> = x.to_vec();
                row.push(1.0);
                let mu1 = model.predict_row(ArrayView1::from(&row));
                *row.last_mut().unwrap() = 0.0;
                let mu0 = model.predict_row(ArrayView1::from(&row));
                mu1 - mu0
            }
            CateState::T { mu0, mu1 } => mu1.predict_row(x) - mu0.predict_row(x),
            CateState::X { tau0, tau1, weight } => {
                let w = match weight {
                    FittedWeight::Constant(c) => *c,
                    FittedWeight::Propensity(model) => model.predict_proba_row(x),
                };
                w * tau0.predict_row(x) + (1.0 - w) * tau1.predict_row(x)
            }
            CateState::Rdml { effect } => match effect {
                EffectState::Constant(c) => *c,
                EffectState::Flexible(model) => model.predict_row(x),
            },
        }
    }

    pub fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        Array1::from_iter(x.rows().into_iter().map(|r| self.predict_tau_row(r)))
    }
}

fn augment_with_treatment(x: ArrayView2<f64>, t: &Array1<f64>) -> Array2<f64> {
    let (n, d) = (x.nrows(), x.ncols());
    let mut out = Array2::<f64>::zeros((n, d + 1));
    out.slice_mut(ndarray::s![.., ..d]).assign(&x);
    out.column_mut(d).assign(t);
    out
}

/// Fit μ(x, t) = E[Y|X=x, T=t] with treatment appended as one more feature;
/// τ̂(x) = μ(x,1) - μ(x,0).
pub fn fit_s_learner(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
) -> Result<CateModel> {
    dataset.require_both_arms()?;
    let augmented = augment_with_treatment(dataset.covariates.view(), &dataset.treatment);
    let model = fit_regressor(outcome_spec, augmented.view(), dataset.outcome.view())?;
    Ok(CateModel {
        state: CateState::S { model },
        metadata: CateMetadata {
            family: "s".into(),
            description: format!("s({})", outcome_spec.kind_name()),
            seed: outcome_spec.seed().0,
            base_specs: vec![outcome_spec.clone()],
        },
    })
}

/// Fit μ̂1 on treated rows and μ̂0 on control rows; τ̂(x) = μ̂1(x) - μ̂0(x).
pub fn fit_t_learner(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
) -> Result<CateModel> {
    dataset.require_both_arms()?;
    let seed = outcome_spec.seed();
    let (mu0, mu1) = fit_arm_models(dataset, outcome_spec, seed)?;
    Ok(CateModel {
        state: CateState::T { mu0, mu1 },
        metadata: CateMetadata {
            family: "t".into(),
            description: format!("t({})", outcome_spec.kind_name()),
            seed: seed.0,
            base_specs: vec![outcome_spec.clone()],
        },
    })
}

fn fit_arm_models(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
    seed: RngSeed,
) -> Result<(FittedRegressor, FittedRegressor)> {
    let control = dataset.control_indices();
    let treated = dataset.treated_indices();
    let fit_arm = |idx: &[usize], stream: u64| -> Result<FittedRegressor> {
        let sub = dataset.subset(idx);
        fit_regressor(
            &outcome_spec.with_seed(seed.derive(stream)),
            sub.covariates.view(),
            sub.outcome.view(),
        )
    };
    Ok((fit_arm(&control, 0)?, fit_arm(&treated, 1)?))
}

/// X-learner: arm outcome models impute the missing counterfactual, effect
/// regressors fit the imputed per-unit effects, and a weight function mixes
/// the two effect surfaces.
pub fn fit_x_learner(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
    effect_spec: &LearnerSpec,
    weight: &XWeight,
    treatment_spec: Option<&LearnerSpec>,
) -> Result<CateModel> {
    dataset.require_both_arms()?;
    let seed = outcome_spec.seed();
    let (mu0, mu1) = fit_arm_models(dataset, outcome_spec, seed)?;

    let treated = dataset.treated_indices();
    let control = dataset.control_indices();
    let treated_ds = dataset.subset(&treated);
    let control_ds = dataset.subset(&control);

    // Imputed effects: treated keep their factual Y(1), control their Y(0).
    let d1 = &treated_ds.outcome - &mu0.predict(treated_ds.covariates.view());
    let d0 = &mu1.predict(control_ds.covariates.view()) - &control_ds.outcome;

    let tau1 = fit_regressor(
        &effect_spec.with_seed(seed.derive(2)),
        treated_ds.covariates.view(),
        d1.view(),
    )?;
    let tau0 = fit_regressor(
        &effect_spec.with_seed(seed.derive(3)),
        control_ds.covariates.view(),
        d0.view(),
    )?;

    let fitted_weight = match weight {
        XWeight::Constant { value } => {
            if !(0.0..=1.0).contains(value) {
                return Err(Error::Config(format!(
                    "x-learner weight {value} outside [0,1]"
                )));
            }
            FittedWeight::Constant(*value)
        }
        XWeight::Propensity => {
            let default_spec = LearnerSpec::Logistic(LogisticSpec::default());
            let spec = treatment_spec
                .unwrap_or(&default_spec)
                .with_seed(seed.derive(4));
            FittedWeight::Propensity(fit_classifier(
                &spec,
                dataset.covariates.view(),
                dataset.treatment.view(),
            )?)
        }
    };
    Ok(CateModel {
        state: CateState::X {
            tau0,
            tau1,
            weight: fitted_weight,
        },
        metadata: CateMetadata {
            family: "x".into(),
            description: format!(
                "x({}/{})",
                outcome_spec.kind_name(),
                effect_spec.kind_name()
            ),
            seed: seed.0,
            base_specs: {
                let mut specs = vec![outcome_spec.clone(), effect_spec.clone()];
                specs.extend(treatment_spec.cloned());
                specs
            },
        },
    })
}

/// Out-of-fold nuisance predictions plus the fold bookkeeping that proves
/// cross-fitting hygiene: each unit is scored by models trained on its
/// fold's complement.
#[derive(Debug, Clone)]
pub struct NuisancePair {
    /// Out-of-fold q̂(x) = E[Y|X].
    pub q_hat: Array1<f64>,
    /// Out-of-fold f̂(x) = E[T|X].
    pub f_hat: Array1<f64>,
    pub fold_of: Vec<usize>,
    /// Index sets per fold (fold f members were scored by the model trained
    /// on everything else).
    pub folds: Vec<Vec<usize>>,
}

/// Cross-fit the outcome and treatment nuisances with `k` folds.
pub fn cross_fit_nuisances(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
    treatment_spec: &LearnerSpec,
    k: usize,
    seed: RngSeed,
) -> Result<NuisancePair> {
    dataset.require_both_arms()?;
    let n = dataset.n();
    let fold_of = assign_folds(&dataset.treatment, k, seed.derive(0))?;
    let mut q_hat = Array1::<f64>::zeros(n);
    let mut f_hat = Array1::<f64>::zeros(n);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &f) in fold_of.iter().enumerate() {
        folds[f].push(i);
    }
    for (f, members) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let train = dataset.subset(&train_idx);
        let q_model = fit_regressor(
            &outcome_spec.with_seed(seed.derive(1 + f as u64)),
            train.covariates.view(),
            train.outcome.view(),
        )?;
        let f_model = fit_classifier(
            &treatment_spec.with_seed(seed.derive(1001 + f as u64)),
            train.covariates.view(),
            train.treatment.view(),
        )?;
        for &i in members {
            let row = dataset.covariates.row(i);
            q_hat[i] = q_model.predict_row(row);
            f_hat[i] = f_model.predict_proba_row(row);
        }
    }
    Ok(NuisancePair {
        q_hat,
        f_hat,
        fold_of,
        folds,
    })
}

/// Intercept-free projection of the outcome residual on the treatment
/// residual: Σ ŶᵢT̂ᵢ / Σ T̂ᵢ².
pub fn ols_effect(y_resid: &Array1<f64>, t_resid: &Array1<f64>) -> Result<f64> {
    if y_resid.len() != t_resid.len() {
        return Err(Error::Structural("residual length mismatch".into()));
    }
    let denom: f64 = t_resid.iter().map(|v| v * v).sum();
    check_identified(denom, t_resid.len())?;
    Ok(y_resid
        .iter()
        .zip(t_resid.iter())
        .map(|(y, t)| y * t)
        .sum::<f64>()
        / denom)
}

fn check_identified(sum_sq_t_resid: f64, n: usize) -> Result<()> {
    if sum_sq_t_resid <= 1e-8 * n as f64 {
        return Err(Error::Identification(
            "treatment residuals are (numerically) zero: T is fully explained by X".into(),
        ));
    }
    Ok(())
}

/// Residualization estimator: cross-fitted residuals Ŷ = Y - q̂(X) and
/// T̂ = T - f̂(X), then an effect stage minimizing Σ(Ŷ - τ(X)·T̂)².
pub fn fit_rdml(
    dataset: &ObservationalDataset,
    outcome_spec: &LearnerSpec,
    treatment_spec: &LearnerSpec,
    effect: &EffectKind,
    folds: usize,
) -> Result<CateModel> {
    let seed = outcome_spec.seed();
    let nuisance = cross_fit_nuisances(dataset, outcome_spec, treatment_spec, folds, seed)?;
    let y_resid = &dataset.outcome - &nuisance.q_hat;
    let t_resid = &dataset.treatment - &nuisance.f_hat;

    let effect_state = match effect {
        EffectKind::Ols => EffectState::Constant(ols_effect(&y_resid, &t_resid)?),
        EffectKind::Flexible { spec } => {
            let denom: f64 = t_resid.iter().map(|v| v * v).sum();
            check_identified(denom, t_resid.len())?;
            // Σ(Ŷ - τ(X)T̂)² = Σ T̂²·(Ŷ/T̂ - τ(X))²: a weighted regression
            // with targets Ŷ/T̂ and weights T̂².
            let weights = t_resid.mapv(|v| v * v);
            let targets = Array1::from_iter(y_resid.iter().zip(t_resid.iter()).map(|(y, t)| {
                let t_safe = if t.abs() < 1e-12 {
                    1e-12_f64.copysign(*t)
                } else {
                    *t
                };
                y / t_safe
            }));
            EffectState::Flexible(fit_regressor_weighted(
                &spec.with_seed(seed.derive(2001)),
                dataset.covariates.view(),
                targets.view(),
                Some(&weights),
            )?)
        }
    };
    let effect_name = match effect {
        EffectKind::Ols => "ols".to_string(),
        EffectKind::Flexible { spec } => spec.kind_name().to_string(),
    };
    Ok(CateModel {
        state: CateState::Rdml {
            effect: effect_state,
        },
        metadata: CateMetadata {
            family: "rdml".into(),
            description: format!(
                "rdml({}/{}/{effect_name})",
                outcome_spec.kind_name(),
                treatment_spec.kind_name()
            ),
            seed: seed.0,
            base_specs: {
                let mut specs = vec![outcome_spec.clone(), treatment_spec.clone()];
                if let EffectKind::Flexible { spec } = effect {
                    specs.push(spec.clone());
                }
                specs
            },
        },
    })
}
