//! `hte importance`: fit one estimator on the full dataset and attribute
//! its effect predictions to features.

use rand::seq::index::sample;

use crate::commands::{core_err, load_config, load_data};
use crate::config::{ImportanceMethodConfig, ImportanceRunConfig};
use crate::{CliError, CommonArgs};
use hte_core::importance::{
    exact_shapley_report, permutation_importance, write_attributions_csv, write_importance_csv,
};
use hte_core::RngSeed;

pub fn run(args: &CommonArgs) -> Result<u8, CliError> {
    let config: ImportanceRunConfig = load_config(&args.config)?;
    config
        .estimator
        .validate()
        .map_err(|e| CliError::usage(e.to_string()))?;
    let seed = RngSeed(args.seed);
    let (dataset, _, _) = load_data(&config.data, seed.derive(10))?;
    let model = config
        .estimator
        .fit(&dataset, seed.derive(11))
        .map_err(core_err)?;
    eprintln!("fitted {} on {} rows", config.estimator.name(), dataset.n());

    match &config.method {
        ImportanceMethodConfig::Permutation { repeats } => {
            let report = permutation_importance(&model, &dataset, *repeats, seed.derive(12))
                .map_err(core_err)?;
            write_importance_csv(&report, &args.out.join("importance.csv")).map_err(core_err)?;
        }
        ImportanceMethodConfig::ExactShapley { instances } => {
            let k = (*instances).min(dataset.n());
            if k == 0 {
                return Err(CliError::usage("exact-shapley needs at least one instance"));
            }
            let mut picked: Vec<usize> = sample(&mut seed.derive(13).rng(), dataset.n(), k)
                .into_iter()
                .collect();
            picked.sort_unstable();
            let report = exact_shapley_report(&model, &dataset, &picked).map_err(core_err)?;
            write_importance_csv(&report, &args.out.join("importance.csv")).map_err(core_err)?;
            write_attributions_csv(&report, &picked, &args.out.join("attributions.csv"))
                .map_err(core_err)?;
        }
    }
    Ok(0)
}
