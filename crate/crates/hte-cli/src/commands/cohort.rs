//! `hte cohort`: run the claim pipeline from generated or provided
//! timelines; emit timelines NDJSON, the cohort matrix CSV, and the funnel
//! tally JSON (with treatment-label counts).

use crate::commands::{core_err, load_config};
use crate::config::CohortCommandConfig;
use crate::{CliError, CommonArgs};
use hte_core::cohort::{
    generate_claims, read_timelines_ndjson, run_pipeline, write_timelines_ndjson,
};
use hte_core::RngSeed;

pub fn run(args: &CommonArgs) -> Result<u8, CliError> {
    let config: CohortCommandConfig = load_config(&args.config)?;
    let seed = RngSeed(args.seed);
    let timelines = match (&config.claims, &config.timelines_file) {
        (Some(claims), None) => generate_claims(claims, seed.derive(1)).map_err(core_err)?,
        (None, Some(path)) => read_timelines_ndjson(path).map_err(core_err)?,
        _ => {
            return Err(CliError::usage(
                "config must set exactly one of `claims` or `timelines_file`",
            ))
        }
    };
    write_timelines_ndjson(&timelines, &args.out.join("timelines.ndjson")).map_err(core_err)?;

    let out = run_pipeline(timelines, &config.spec, seed.derive(2)).map_err(core_err)?;
    let dataset = out.matrix.to_dataset().map_err(core_err)?;
    hte_core::io::write_dataset_csv(&dataset, &args.out.join("cohort.csv"), None)
        .map_err(core_err)?;

    let funnel = serde_json::json!({
        "eligibility": out.tally,
        "treatment_labels": out.label_counts,
        "final_rows": out.matrix.n(),
    });
    hte_core::io::atomic_write(
        &args.out.join("funnel.json"),
        &serde_json::to_vec_pretty(&funnel).map_err(|e| CliError::runtime(e.to_string()))?,
    )
    .map_err(core_err)?;

    let (treated, control) = out.matrix.arm_counts();
    eprintln!(
        "cohort: {} in, {} excluded, {} final (study {treated} / standard-of-care {control})",
        out.tally.input,
        out.tally.total_removed(),
        out.matrix.n(),
    );
    Ok(0)
}
