//! `hte benchmark`: fit the estimator grid on the train split, evaluate the
//! requested metrics, and write `report.csv` (sorted by the influence-
//! corrected PEHE) plus the optional propensity AUROC comparison table.

use rayon::prelude::*;

use crate::commands::{core_err, load_config, load_data};
use crate::config::{MetricKind, RunConfig};
use crate::{CliError, CommonArgs};
use hte_core::evaluation::{
    ermse, if_pehe_with_context, pehe_of_model, write_report_csv, EvaluationReport, IfPeheContext,
};
use hte_core::propensity::{
    auroc, balance_report, estimate_propensity, write_balance_csv, write_propensity_hist_csv,
};
use hte_core::{CateEstimator, ObservationalDataset, RngSeed};

const HIST_BINS: usize = 20;

pub fn run(args: &CommonArgs) -> Result<u8, CliError> {
    let config: RunConfig = load_config(&args.config)?;
    if config.estimators.is_empty() {
        return Err(CliError::usage("config needs at least one estimator"));
    }
    for estimator in &config.estimators {
        estimator
            .validate()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    let seed = RngSeed(args.seed);
    let (dataset, _, _) = load_data(&config.data, seed.derive(10))?;

    let want = |metric: MetricKind| config.metrics.contains(&metric);
    if want(MetricKind::Pehe) && dataset.truth.is_none() {
        return Err(CliError::usage(
            "metrics include pehe but the dataset carries no ground truth",
        ));
    }

    let split = hte_core::split(dataset.n(), config.split, seed.derive(11)).map_err(core_err)?;
    let train = dataset.subset(&split.train);
    let test = dataset.subset(&split.test);
    eprintln!(
        "data: {} rows -> train {} / validation {} / test {}",
        dataset.n(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );

    // Step-one context built once per evaluation set and shared by every
    // candidate.
    let context = if want(MetricKind::IfPehe) {
        Some(IfPeheContext::build(&test, seed.derive(12)).map_err(core_err)?)
    } else {
        None
    };
    if let Some(ctx) = &context {
        if ctx.degenerate_propensity {
            eprintln!("warning: plug-in propensity scores were entirely clipped");
        }
    }

    let estimator_seeds: Vec<u64> = if config.seeds.is_empty() {
        vec![args.seed]
    } else {
        config.seeds.clone()
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::runtime(format!("worker pool: {e}")))?;
    let total = config.estimators.len();
    let reports: Vec<EvaluationReport> = pool.install(|| {
        config
            .estimators
            .par_iter()
            .enumerate()
            .map(|(i, est)| {
                let report = evaluate_one(
                    est,
                    &train,
                    &test,
                    &estimator_seeds,
                    context.as_ref(),
                    &config.metrics,
                    &args.out,
                );
                match &report.error {
                    None => eprintln!("[{}/{total}] {} done", i + 1, report.estimator),
                    Some(e) => eprintln!("[{}/{total}] {} FAILED: {e}", i + 1, report.estimator),
                }
                report
            })
            .collect()
    });

    // Sort by IF-PEHE ascending; rows without it (or failed) keep config
    // order at the end.
    let mut order: Vec<usize> = (0..reports.len()).collect();
    order.sort_by(|&a, &b| match (reports[a].if_pehe, reports[b].if_pehe) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap().then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    let sorted: Vec<EvaluationReport> = order.into_iter().map(|i| reports[i].clone()).collect();
    write_report_csv(&sorted, &args.out.join("report.csv")).map_err(core_err)?;
    let meta = serde_json::json!({
        "seed": args.seed,
        "estimator_seeds": estimator_seeds,
        "metrics": config.metrics,
        "split": config.split,
        "n_train": train.n(),
        "n_eval": test.n(),
        "if_pehe_convention": hte_core::evaluation::IF_PEHE_CONVENTION,
    });
    hte_core::io::atomic_write(
        &args.out.join("report.meta.json"),
        &serde_json::to_vec_pretty(&meta).map_err(|e| CliError::runtime(e.to_string()))?,
    )
    .map_err(core_err)?;

    if !config.propensity_models.is_empty() {
        write_propensity_table(&config, &dataset, &args.out)?;
    }

    let succeeded = sorted.iter().filter(|r| r.error.is_none()).count();
    eprintln!(
        "report: {} of {} estimators succeeded",
        succeeded,
        sorted.len()
    );
    Ok(if succeeded > 0 { 0 } else { 1 })
}

#[allow(clippy::too_many_arguments)]
fn evaluate_one(
    estimator: &hte_core::EstimatorConfig,
    train: &ObservationalDataset,
    test: &ObservationalDataset,
    seeds: &[u64],
    context: Option<&IfPeheContext>,
    metrics: &[MetricKind],
    out_dir: &std::path::Path,
) -> EvaluationReport {
    let mut report = EvaluationReport {
        estimator: estimator.name(),
        base_learners: estimator.base_learners(),
        ermse: None,
        if_pehe: None,
        pehe: None,
        sqrt_pehe: None,
        n_eval: test.n(),
        warnings: Vec::new(),
        error: None,
    };
    if let Some(ctx) = context {
        if ctx.degenerate_propensity {
            report
                .warnings
                .push("plug-in propensity fully clipped".into());
        }
    }
    let want = |metric: MetricKind| metrics.contains(&metric);
    let mut sums = [0.0f64; 4]; // ermse, if_pehe, pehe, sqrt_pehe
    for (k, &s) in seeds.iter().enumerate() {
        let seed = RngSeed(s);
        let result = (|| -> hte_core::Result<()> {
            let model = estimator.fit(train, seed)?;
            if k == 0 {
                if let hte_core::FittedCate::Rep(net) = &model {
                    // Loss trace of the first-seed training run.
                    let file = format!(
                        "trace_{}.csv",
                        report.estimator.replace(['(', ')', '/'], "_")
                    );
                    hte_core::replearn::write_trace_csv(net, &out_dir.join(file))?;
                }
            }
            if want(MetricKind::Ermse) {
                sums[0] += ermse(estimator, train, test, seed)?;
            }
            if let Some(ctx) = context {
                let tau = model.predict_tau(test.covariates.view());
                sums[1] += if_pehe_with_context(ctx, &tau, test)?;
            }
            if want(MetricKind::Pehe) {
                let (value, root) = pehe_of_model(&model, test)?;
                sums[2] += value;
                sums[3] += root;
            }
            Ok(())
        })();
        if let Err(e) = result {
            report.error = Some(e.to_string());
            return report;
        }
    }
    let k = seeds.len() as f64;
    if want(MetricKind::Ermse) {
        report.ermse = Some(sums[0] / k);
    }
    if context.is_some() {
        report.if_pehe = Some(sums[1] / k);
    }
    if want(MetricKind::Pehe) {
        report.pehe = Some(sums[2] / k);
        report.sqrt_pehe = Some(sums[3] / k);
    }
    report
}

/// AUROC comparison over the configured propensity models, plus balance
/// and score-histogram diagnostics for the first model's scores.
fn write_propensity_table(
    config: &RunConfig,
    dataset: &ObservationalDataset,
    out_dir: &std::path::Path,
) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for (i, model) in config.propensity_models.iter().enumerate() {
        let row = match estimate_propensity(dataset, &model.spec) {
            Ok(scores) => {
                if i == 0 {
                    let report = balance_report(dataset, &scores).map_err(core_err)?;
                    write_balance_csv(&report, &out_dir.join("balance.csv")).map_err(core_err)?;
                    write_propensity_hist_csv(
                        dataset,
                        &scores,
                        HIST_BINS,
                        &out_dir.join("propensity_hist.csv"),
                    )
                    .map_err(core_err)?;
                }
                match auroc(&scores.scores, &dataset.treatment) {
                    Ok(value) => vec![model.display_name(), format!("{value}")],
                    Err(e) => {
                        eprintln!("propensity model {}: {e}", model.display_name());
                        vec![model.display_name(), String::new()]
                    }
                }
            }
            Err(e) => {
                eprintln!("propensity model {}: {e}", model.display_name());
                vec![model.display_name(), String::new()]
            }
        };
        rows.push(row);
    }
    let bytes = hte_core::io::rows_to_csv_bytes(&["model", "auroc"], &rows).map_err(core_err)?;
    hte_core::io::atomic_write(&out_dir.join("table4.csv"), &bytes).map_err(core_err)
}
