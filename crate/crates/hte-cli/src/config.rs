//! JSON config schemas for the CLI commands. Unknown keys are rejected so
//! typos surface as exit-code-2 errors naming the offending key.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use hte_core::cohort::{ClaimsConfig, CohortSpec};
use hte_core::learners::LearnerSpec;
use hte_core::synth::GeneratorConfig;
use hte_core::EstimatorConfig;

/// Where a command gets its dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    /// Built-in synthetic generator.
    Generator { generator: GeneratorConfig },
    /// An existing dataset CSV in the core format.
    File { path: PathBuf },
    /// Claim-style generator plus the cohort pipeline.
    Cohort {
        claims: Box<ClaimsConfig>,
        #[serde(default)]
        spec: Box<CohortSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Pehe,
    Ermse,
    IfPehe,
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::Ermse, MetricKind::IfPehe]
}

fn default_split() -> (f64, f64, f64) {
    (6.0, 2.0, 2.0)
}

/// A propensity model entry for the AUROC comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensityModelConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub spec: LearnerSpec,
}

impl PropensityModelConfig {
    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| self.spec.kind_name().to_string())
    }
}

/// The benchmark command config: data source, estimator grid, evaluation
/// options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub estimators: Vec<EstimatorConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Estimator seeds; metrics are averaged across them. Empty means the
    /// command-line seed alone.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_split")]
    pub split: (f64, f64, f64),
    /// When non-empty, an AUROC comparison table over these propensity
    /// models is also written.
    #[serde(default)]
    pub propensity_models: Vec<PropensityModelConfig>,
}

/// The cohort command config: timelines come from the generator or a file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortCommandConfig {
    #[serde(default)]
    pub claims: Option<ClaimsConfig>,
    #[serde(default)]
    pub timelines_file: Option<PathBuf>,
    #[serde(default)]
    pub spec: CohortSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImportanceMethodConfig {
    Permutation {
        #[serde(default = "default_repeats")]
        repeats: usize,
    },
    ExactShapley {
        #[serde(default = "default_instances")]
        instances: usize,
    },
}

fn default_repeats() -> usize {
    5
}

fn default_instances() -> usize {
    50
}

/// The importance command config.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImportanceRunConfig {
    pub data: DataConfig,
    pub estimator: EstimatorConfig,
    #[serde(default = "default_permutation")]
    pub method: ImportanceMethodConfig,
}

fn default_permutation() -> ImportanceMethodConfig {
    ImportanceMethodConfig::Permutation {
        repeats: default_repeats(),
    }
}
