//! `hte generate`: write a dataset CSV with its provenance sidecar; for the
//! cohort source also the timelines and funnel tally.

use crate::commands::{core_err, load_config, load_data};
use crate::config::DataConfig;
use crate::{CliError, CommonArgs};
use hte_core::RngSeed;

pub fn run(args: &CommonArgs) -> Result<u8, CliError> {
    let data: DataConfig = load_config(&args.config)?;
    let seed = RngSeed(args.seed);
    let (dataset, provenance, pipeline) = load_data(&data, seed)?;

    if let Some(out) = &pipeline {
        // Re-generate timelines for emission; same derived seed as load_data.
        if let DataConfig::Cohort { claims, .. } = &data {
            let timelines =
                hte_core::cohort::generate_claims(claims, seed.derive(1)).map_err(core_err)?;
            hte_core::cohort::write_timelines_ndjson(
                &timelines,
                &args.out.join("timelines.ndjson"),
            )
            .map_err(core_err)?;
        }
        hte_core::cohort::write_tally_json(&out.tally, &args.out.join("funnel.json"))
            .map_err(core_err)?;
        hte_core::io::write_dataset_csv(
            &dataset,
            &args.out.join("cohort.csv"),
            provenance.as_ref(),
        )
        .map_err(core_err)?;
        eprintln!(
            "cohort: {} -> {} rows ({} features)",
            out.tally.input,
            dataset.n(),
            dataset.dim()
        );
    } else {
        hte_core::io::write_dataset_csv(
            &dataset,
            &args.out.join("dataset.csv"),
            provenance.as_ref(),
        )
        .map_err(core_err)?;
        eprintln!("dataset: {} rows ({} features)", dataset.n(), dataset.dim());
    }
    Ok(0)
}
