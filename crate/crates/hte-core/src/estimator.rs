//! Unified estimator configuration: the JSON unit the benchmark harness
//! fits and evaluates. Covers the meta-learner families and the
//! representation-network variants behind one `fit` entry point.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::learners::LearnerSpec;
use crate::metalearners::{
    fit_rdml, fit_s_learner, fit_t_learner, fit_x_learner, CateModel, EffectKind, XWeight,
};
use crate::replearn::{fit_repnet, DragonConfig, RepNetConfig, RepNetModel};
use crate::seed::RngSeed;

/// Anything that predicts a per-unit effect.
pub trait CateEstimator: Send + Sync {
    fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64;

    fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        Array1::from_iter(x.rows().into_iter().map(|r| self.predict_tau_row(r)))
    }
}

impl CateEstimator for CateModel {
    fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64 {
        CateModel::predict_tau_row(self, x)
    }

    fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        CateModel::predict_tau(self, x)
    }
}

impl CateEstimator for RepNetModel {
    fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64 {
        RepNetModel::predict_tau_row(self, x)
    }

    fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        RepNetModel::predict_tau(self, x)
    }
}

fn default_folds() -> usize {
    2
}

/// One estimator in the benchmark grid, tagged by family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    S {
        #[serde(default)]
        id: Option<String>,
        outcome_spec: LearnerSpec,
    },
    T {
        #[serde(default)]
        id: Option<String>,
        outcome_spec: LearnerSpec,
    },
    X {
        #[serde(default)]
        id: Option<String>,
        outcome_spec: LearnerSpec,
        effect_spec: LearnerSpec,
        #[serde(default)]
        weight: XWeight,
        #[serde(default)]
        treatment_spec: Option<LearnerSpec>,
    },
    Rdml {
        #[serde(default)]
        id: Option<String>,
        outcome_spec: LearnerSpec,
        treatment_spec: LearnerSpec,
        #[serde(default = "EffectKind::default_ols")]
        effect_spec: EffectKind,
        #[serde(default = "default_folds")]
        folds: usize,
    },
    Tarnet {
        #[serde(default)]
        id: Option<String>,
        repnet: RepNetConfig,
    },
    Cfrnet {
        #[serde(default)]
        id: Option<String>,
        repnet: RepNetConfig,
    },
    Dragonnet {
        #[serde(default)]
        id: Option<String>,
        repnet: RepNetConfig,
    },
}

impl EffectKind {
    fn default_ols() -> Self {
        EffectKind::Ols
    }
}

/// A fitted estimator of either flavor.
#[derive(Debug)]
pub enum FittedCate {
    Meta(CateModel),
    Rep(RepNetModel),
}

impl CateEstimator for FittedCate {
    fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64 {
        match self {
            FittedCate::Meta(m) => m.predict_tau_row(x),
            FittedCate::Rep(m) => m.predict_tau_row(x),
        }
    }

    fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        match self {
            FittedCate::Meta(m) => m.predict_tau(x),
            FittedCate::Rep(m) => m.predict_tau(x),
        }
    }
}

impl EstimatorConfig {
    /// Report identifier: the explicit `id` or a derived family(bases) name.
    pub fn name(&self) -> String {
        let explicit = match self {
            EstimatorConfig::S { id, .. }
            | EstimatorConfig::T { id, .. }
            | EstimatorConfig::X { id, .. }
            | EstimatorConfig::Rdml { id, .. }
            | EstimatorConfig::Tarnet { id, .. }
            | EstimatorConfig::Cfrnet { id, .. }
            | EstimatorConfig::Dragonnet { id, .. } => id.clone(),
        };
        explicit.unwrap_or_else(|| match self {
            EstimatorConfig::S { outcome_spec, .. } => format!("s({})", outcome_spec.kind_name()),
            EstimatorConfig::T { outcome_spec, .. } => format!("t({})", outcome_spec.kind_name()),
            EstimatorConfig::X {
                outcome_spec,
                effect_spec,
                ..
            } => {
                format!(
                    "x({}/{})",
                    outcome_spec.kind_name(),
                    effect_spec.kind_name()
                )
            }
            EstimatorConfig::Rdml {
                outcome_spec,
                effect_spec,
                ..
            } => {
                let effect = match effect_spec {
                    EffectKind::Ols => "ols".to_string(),
                    EffectKind::Flexible { spec } => spec.kind_name().to_string(),
                };
                format!("rdml({}/{effect})", outcome_spec.kind_name())
            }
            EstimatorConfig::Tarnet { .. } => "tarnet".into(),
            EstimatorConfig::Cfrnet { .. } => "cfrnet".into(),
            EstimatorConfig::Dragonnet { .. } => "dragonnet".into(),
        })
    }

    /// Base-learner summary for the report.
    pub fn base_learners(&self) -> String {
        match self {
            EstimatorConfig::S { outcome_spec, .. } | EstimatorConfig::T { outcome_spec, .. } => {
                format!("outcome={}", outcome_spec.kind_name())
            }
            EstimatorConfig::X {
                outcome_spec,
                effect_spec,
                ..
            } => format!(
                "outcome={};effect={}",
                outcome_spec.kind_name(),
                effect_spec.kind_name()
            ),
            EstimatorConfig::Rdml {
                outcome_spec,
                treatment_spec,
                effect_spec,
                ..
            } => {
                let effect = match effect_spec {
                    EffectKind::Ols => "ols".to_string(),
                    EffectKind::Flexible { spec } => spec.kind_name().to_string(),
                };
                format!(
                    "outcome={};treatment={};effect={effect}",
                    outcome_spec.kind_name(),
                    treatment_spec.kind_name()
                )
            }
            EstimatorConfig::Tarnet { .. } => "network".into(),
            EstimatorConfig::Cfrnet { .. } => "network+ipm".into(),
            EstimatorConfig::Dragonnet { .. } => "network+propensity".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            EstimatorConfig::S { outcome_spec, .. } | EstimatorConfig::T { outcome_spec, .. } => {
                outcome_spec.validate()
            }
            EstimatorConfig::X {
                outcome_spec,
                effect_spec,
                weight,
                treatment_spec,
                ..
            } => {
                outcome_spec.validate()?;
                effect_spec.validate()?;
                if let XWeight::Constant { value } = weight {
                    if !(0.0..=1.0).contains(value) {
                        return Err(Error::Config("x-learner weight outside [0,1]".into()));
                    }
                }
                if let Some(t) = treatment_spec {
                    t.validate()?;
                }
                Ok(())
            }
            EstimatorConfig::Rdml {
                outcome_spec,
                treatment_spec,
                effect_spec,
                folds,
                ..
            } => {
                outcome_spec.validate()?;
                treatment_spec.validate()?;
                if let EffectKind::Flexible { spec } = effect_spec {
                    spec.validate()?;
                }
                if *folds < 2 {
                    return Err(Error::Config("rdml: folds must be >= 2".into()));
                }
                Ok(())
            }
            EstimatorConfig::Tarnet { repnet, .. } => {
                repnet.validate()?;
                if repnet.ipm_weight != 0.0 {
                    return Err(Error::Config(
                        "tarnet requires ipm_weight = 0 (use cfrnet for a balance penalty)".into(),
                    ));
                }
                if !matches!(repnet.dragon, DragonConfig::Off) {
                    return Err(Error::Config(
                        "tarnet requires the propensity head off".into(),
                    ));
                }
                Ok(())
            }
            EstimatorConfig::Cfrnet { repnet, .. } => {
                repnet.validate()?;
                if repnet.ipm_weight == 0.0 {
                    return Err(Error::Config("cfrnet requires ipm_weight > 0".into()));
                }
                if !matches!(repnet.dragon, DragonConfig::Off) {
                    return Err(Error::Config(
                        "cfrnet requires the propensity head off".into(),
                    ));
                }
                Ok(())
            }
            EstimatorConfig::Dragonnet { repnet, .. } => {
                repnet.validate()?;
                if !matches!(repnet.dragon, DragonConfig::On { .. }) {
                    return Err(Error::Config(
                        "dragonnet requires the propensity head on (dragon: {kind: on, ...})"
                            .into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Fit the configured estimator. Component seeds derive from `seed`
    /// mixed with each spec's own seed, so a grid run under one master seed
    /// is deterministic end to end.
    pub fn fit(&self, dataset: &ObservationalDataset, seed: RngSeed) -> Result<FittedCate> {
        self.validate()?;
        let mix =
            |role: u64, spec: &LearnerSpec| spec.with_seed(seed.derive(role).derive(spec.seed().0));
        match self {
            EstimatorConfig::S { outcome_spec, .. } => Ok(FittedCate::Meta(fit_s_learner(
                dataset,
                &mix(0, outcome_spec),
            )?)),
            EstimatorConfig::T { outcome_spec, .. } => Ok(FittedCate::Meta(fit_t_learner(
                dataset,
                &mix(0, outcome_spec),
            )?)),
            EstimatorConfig::X {
                outcome_spec,
                effect_spec,
                weight,
                treatment_spec,
                ..
            } => {
                let treatment = treatment_spec.as_ref().map(|t| mix(1, t));
                Ok(FittedCate::Meta(fit_x_learner(
                    dataset,
                    &mix(0, outcome_spec),
                    &mix(2, effect_spec),
                    weight,
                    treatment.as_ref(),
                )?))
            }
            EstimatorConfig::Rdml {
                outcome_spec,
                treatment_spec,
                effect_spec,
                folds,
                ..
            } => {
                let effect = match effect_spec {
                    EffectKind::Ols => EffectKind::Ols,
                    EffectKind::Flexible { spec } => EffectKind::Flexible { spec: mix(2, spec) },
                };
                Ok(FittedCate::Meta(fit_rdml(
                    dataset,
                    &mix(0, outcome_spec),
                    &mix(1, treatment_spec),
                    &effect,
                    *folds,
                )?))
            }
            EstimatorConfig::Tarnet { repnet, .. }
            | EstimatorConfig::Cfrnet { repnet, .. }
            | EstimatorConfig::Dragonnet { repnet, .. } => {
                let mut config = repnet.clone();
                config.seed = seed.derive(3).derive(repnet.seed).0;
                Ok(FittedCate::Rep(fit_repnet(dataset, &config)?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{ForestSpec, LinearSpec, LogisticSpec};
    use crate::synth::HeterogeneousDgp;

    #[test]
    fn config_json_round_trip_and_names() {
        let grid: Vec<EstimatorConfig> = serde_json::from_str(
            r#"[
              {"family": "s", "outcome_spec": {"kind": "linear"}},
              {"family": "t", "outcome_spec": {"kind": "forest", "n_trees": 50}},
              {"family": "x", "outcome_spec": {"kind": "linear"},
               "effect_spec": {"kind": "linear"}, "weight": {"kind": "constant", "value": 0.3}},
              {"family": "rdml", "outcome_spec": {"kind": "linear"},
               "treatment_spec": {"kind": "logistic"}},
              {"family": "cfrnet", "repnet": {"ipm_weight": 1.0, "epochs": 5}}
            ]"#,
        )
        .unwrap();
        assert_eq!(grid.len(), 5);
        assert_eq!(grid[0].name(), "s(linear)");
        assert_eq!(grid[3].name(), "rdml(linear/ols)");
        for config in &grid {
            config.validate().unwrap();
        }
    }

    #[test]
    fn unknown_family_key_rejected() {
        let err = serde_json::from_str::<EstimatorConfig>(
            r#"{"family": "s", "outcome_spec": {"kind": "linear"}, "bogus": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn tarnet_with_penalty_rejected() {
        let config: EstimatorConfig =
            serde_json::from_str(r#"{"family": "tarnet", "repnet": {"ipm_weight": 0.5}}"#).unwrap();
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn fit_is_deterministic_under_master_seed() {
        let ds = HeterogeneousDgp {
            n: 300,
            ..Default::default()
        }
        .generate(RngSeed(3))
        .unwrap();
        let config = EstimatorConfig::X {
            id: None,
            outcome_spec: LearnerSpec::Forest(ForestSpec {
                n_trees: 10,
                ..Default::default()
            }),
            effect_spec: LearnerSpec::Linear(LinearSpec::default()),
            weight: XWeight::Propensity,
            treatment_spec: Some(LearnerSpec::Logistic(LogisticSpec::default())),
        };
        let a = config.fit(&ds, RngSeed(5)).unwrap();
        let b = config.fit(&ds, RngSeed(5)).unwrap();
        let ta = a.predict_tau(ds.covariates.view());
        let tb = b.predict_tau(ds.covariates.view());
        for i in 0..ds.n() {
            assert_eq!(ta[i].to_bits(), tb[i].to_bits());
        }
        let c = config.fit(&ds, RngSeed(6)).unwrap();
        let tc = c.predict_tau(ds.covariates.view());
        assert_ne!(ta, tc);
    }
}
