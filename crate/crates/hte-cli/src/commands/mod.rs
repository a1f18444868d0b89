pub mod benchmark;
pub mod cohort;
pub mod generate;
pub mod importance;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::config::DataConfig;
use crate::CliError;
use hte_core::cohort::{generate_claims, run_pipeline, PipelineOutput};
use hte_core::io::Provenance;
use hte_core::{Error, ObservationalDataset, RngSeed};

/// Parse a JSON config file; parse errors are usage errors (exit 2) whose
/// message names the offending key.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
}

/// Exit-code classification for core errors: config-shaped problems are
/// usage errors, the rest runtime.
pub fn core_err(e: Error) -> CliError {
    match e {
        Error::Config(_) | Error::Structural(_) | Error::InfeasibleSplit(_) => {
            CliError::usage(e.to_string())
        }
        other => CliError::runtime(other.to_string()),
    }
}

/// Materialize a dataset from any data source. Returns the dataset plus
/// provenance (for generated data) and the cohort pipeline output when the
/// source was the claim pipeline.
pub fn load_data(
    data: &DataConfig,
    seed: RngSeed,
) -> Result<
    (
        ObservationalDataset,
        Option<Provenance>,
        Option<PipelineOutput>,
    ),
    CliError,
> {
    match data {
        DataConfig::Generator { generator } => {
            let ds = generator.generate(seed).map_err(core_err)?;
            let provenance = Provenance {
                generator: generator.kind_name().to_string(),
                seed: seed.0,
                params: serde_json::to_value(generator)
                    .map_err(|e| CliError::runtime(e.to_string()))?,
            };
            Ok((ds, Some(provenance), None))
        }
        DataConfig::File { path } => {
            let ds = hte_core::io::read_dataset_csv(path).map_err(core_err)?;
            Ok((ds, None, None))
        }
        DataConfig::Cohort { claims, spec } => {
            let timelines = generate_claims(claims, seed.derive(1)).map_err(core_err)?;
            let out = run_pipeline(timelines, spec, seed.derive(2)).map_err(core_err)?;
            let ds = out.matrix.to_dataset().map_err(core_err)?;
            let provenance = Provenance {
                generator: "cohort".to_string(),
                seed: seed.0,
                params: serde_json::json!({ "claims": claims, "spec": spec }),
            };
            Ok((ds, Some(provenance), Some(out)))
        }
    }
}
