//! Acceptance suite: one test per release criterion, each printing a
//! pass line with its measured statistics. Tolerances are pinned here.

use std::time::Instant;

use ndarray::{array, Array1};

use hte_core::cohort::{
    self, build_covariates, generate_claims, run_pipeline, ClaimsConfig, CohortSpec,
    EligibilitySpec, LabeledCohort,
};
use hte_core::evaluation::{
    ermse, if_pehe_with_context, pehe, pehe_of_model, spearman, IfPeheContext,
};
use hte_core::importance::{exact_shapley, mean_baseline};
use hte_core::learners::{
    gradient_check, ForestSpec, LearnerSpec, LinearSpec, LogisticSpec, MlpSpec,
};
use hte_core::metalearners::{fit_s_learner, fit_t_learner, fit_x_learner, XWeight};
use hte_core::propensity::{auroc, estimate_propensity, iptw_ate, naive_ate, PropensityScores};
use hte_core::replearn::{
    fit_repnet, mmd, repnet_gradient_check, Bandwidth, KernelSpec, RepNetConfig,
};
use hte_core::synth::{ConfoundedDgp, HeterogeneousDgp, LinearDgp, PartiallyLinearDgp};
use hte_core::{CateEstimator, EstimatorConfig, ObservationalDataset, RngSeed};

fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn forest(n_trees: usize, seed: u64) -> LearnerSpec {
    LearnerSpec::Forest(ForestSpec {
        n_trees,
        seed,
        ..Default::default()
    })
}

fn sqrt_pehe_on(model: &dyn CateEstimator, eval: &ObservationalDataset) -> f64 {
    pehe_of_model(model, eval).unwrap().1
}

#[test]
fn criterion_01_iptw_unbiased_naive_biased() {
    let start = Instant::now();
    let mut iptw_values = Vec::new();
    let mut naive_values = Vec::new();
    for seed in 0..20u64 {
        let ds = ConfoundedDgp {
            n: 10_000,
            ate: 1.0,
            ..Default::default()
        }
        .generate(RngSeed(seed))
        .unwrap();
        let e_true = ds.truth.as_ref().unwrap().true_propensity.clone().unwrap();
        let scores = PropensityScores::from_raw(e_true, (0.01, 0.99)).unwrap();
        iptw_values.push(iptw_ate(&ds, &scores).unwrap().value);
        naive_values.push(naive_ate(&ds).unwrap().value);
    }
    let iptw_median = median(iptw_values);
    let naive_median = median(naive_values);
    let elapsed = start.elapsed();
    assert!(
        (iptw_median - 1.0).abs() <= 0.05,
        "IPTW median {iptw_median} outside 1.0 +- 0.05"
    );
    assert!(
        naive_median - 1.0 >= 0.3,
        "designed naive bias {} below 0.3",
        naive_median - 1.0
    );
    assert!(elapsed.as_secs() < 60, "runtime {elapsed:?} over 1 min");
    println!(
        "[PASS] criterion 1: IPTW median {iptw_median:.4} (target 1.0 +- 0.05), \
         naive bias {:.3} (>= 0.3), {elapsed:?}",
        naive_median - 1.0
    );
}

#[test]
fn criterion_02_dml_recovers_constant_effect() {
    let start = Instant::now();
    let mut errors = Vec::new();
    for seed in 0..20u64 {
        let ds = PartiallyLinearDgp {
            n: 5000,
            tau: 0.5,
            ..Default::default()
        }
        .generate(RngSeed(seed))
        .unwrap();
        let config = EstimatorConfig::Rdml {
            id: None,
            outcome_spec: forest(50, 0),
            treatment_spec: LearnerSpec::Logistic(LogisticSpec::default()),
            effect_spec: hte_core::metalearners::EffectKind::Ols,
            folds: 2,
        };
        let model = config.fit(&ds, RngSeed(seed)).unwrap();
        let tau_hat = model.predict_tau_row(ds.covariates.row(0));
        errors.push((tau_hat - 0.5).abs());
    }
    let med = median(errors);
    let elapsed = start.elapsed();
    assert!(med <= 0.1, "median |tau_hat - 0.5| = {med} over 0.1");
    assert!(elapsed.as_secs() < 120, "runtime {elapsed:?} over 2 min");
    println!("[PASS] criterion 2: DML median absolute error {med:.4} (<= 0.1), {elapsed:?}");
}

#[test]
fn criterion_03_meta_learner_consistency_with_forests() {
    let start = Instant::now();
    let mut small = vec![Vec::new(), Vec::new(), Vec::new()]; // s, t, x at n=500
    let mut large = vec![Vec::new(), Vec::new(), Vec::new()]; // at n=4000
    for seed in 0..10u64 {
        let eval = HeterogeneousDgp {
            n: 2000,
            noise: 0.0,
            ..Default::default()
        }
        .generate(RngSeed(seed).derive(99))
        .unwrap();
        for (n, bucket) in [(500usize, &mut small), (4000usize, &mut large)] {
            let train = HeterogeneousDgp {
                n,
                noise: 0.3,
                ..Default::default()
            }
            .generate(RngSeed(seed).derive(n as u64))
            .unwrap();
            let spec = forest(60, seed);
            let s = fit_s_learner(&train, &spec).unwrap();
            let t = fit_t_learner(&train, &spec).unwrap();
            let x = fit_x_learner(
                &train,
                &spec,
                &spec,
                &XWeight::Propensity,
                Some(&LearnerSpec::Logistic(LogisticSpec::default())),
            )
            .unwrap();
            bucket[0].push(sqrt_pehe_on(&s, &eval));
            bucket[1].push(sqrt_pehe_on(&t, &eval));
            bucket[2].push(sqrt_pehe_on(&x, &eval));
        }
    }
    let elapsed = start.elapsed();
    for (k, family) in ["s", "t", "x"].iter().enumerate() {
        let at_500 = median(small[k].clone());
        let at_4000 = median(large[k].clone());
        assert!(
            at_4000 < at_500,
            "{family}-learner sqrt-PEHE did not improve: {at_4000} at n=4000 vs {at_500} at n=500"
        );
        println!(
            "[PASS] criterion 3 ({family}-learner): median sqrt-PEHE {at_500:.3} at n=500 -> \
             {at_4000:.3} at n=4000"
        );
    }
    assert!(elapsed.as_secs() < 300, "runtime {elapsed:?} over 5 min");
    println!("[PASS] criterion 3: consistency under growth, {elapsed:?}");
}

#[test]
fn criterion_04_x_learner_wins_under_imbalance() {
    let start = Instant::now();
    let mut x_wins = 0usize;
    let trials = 20u64;
    for seed in 0..trials {
        let train = HeterogeneousDgp {
            n: 2500,
            treated_fraction: 0.05,
            noise: 0.3,
            ..Default::default()
        }
        .generate(RngSeed(seed))
        .unwrap();
        let eval = HeterogeneousDgp {
            n: 2000,
            noise: 0.0,
            ..Default::default()
        }
        .generate(RngSeed(seed).derive(7))
        .unwrap();
        let spec = forest(60, seed);
        let t = fit_t_learner(&train, &spec).unwrap();
        let x = fit_x_learner(
            &train,
            &spec,
            &spec,
            &XWeight::Propensity,
            Some(&LearnerSpec::Logistic(LogisticSpec::default())),
        )
        .unwrap();
        if sqrt_pehe_on(&x, &eval) <= sqrt_pehe_on(&t, &eval) {
            x_wins += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        x_wins as f64 >= 0.6 * trials as f64,
        "x-learner won only {x_wins}/{trials} seeds"
    );
    println!(
        "[PASS] criterion 4: x-learner <= t-learner sqrt-PEHE in {x_wins}/{trials} seeds \
         (>= 60%), {elapsed:?}"
    );
}

#[test]
fn criterion_05_if_pehe_ranking_fidelity() {
    let start = Instant::now();
    let candidates: Vec<EstimatorConfig> = serde_json::from_str(
        r#"[
          {"family": "s", "outcome_spec": {"kind": "linear"}},
          {"family": "t", "outcome_spec": {"kind": "linear"}},
          {"family": "rdml", "outcome_spec": {"kind": "linear"},
           "treatment_spec": {"kind": "logistic"}},
          {"family": "s", "outcome_spec": {"kind": "forest", "n_trees": 60}},
          {"family": "t", "outcome_spec": {"kind": "forest", "n_trees": 60}},
          {"family": "x", "outcome_spec": {"kind": "forest", "n_trees": 60},
           "effect_spec": {"kind": "forest", "n_trees": 60}}
        ]"#,
    )
    .unwrap();
    let mut rhos = Vec::new();
    for seed in 0..10u64 {
        let train = HeterogeneousDgp {
            n: 2000,
            noise: 0.3,
            linear_tau: false,
            ..Default::default()
        }
        .generate(RngSeed(seed))
        .unwrap();
        let eval = HeterogeneousDgp {
            n: 1500,
            noise: 0.3,
            linear_tau: false,
            ..Default::default()
        }
        .generate(RngSeed(seed).derive(3))
        .unwrap();
        let context = IfPeheContext::build(&eval, RngSeed(seed).derive(5)).unwrap();
        let truth = eval.truth.as_ref().unwrap();
        let mut if_values = Vec::new();
        let mut true_values = Vec::new();
        for candidate in &candidates {
            let model = candidate.fit(&train, RngSeed(seed)).unwrap();
            let tau_hat = model.predict_tau(eval.covariates.view());
            if_values.push(if_pehe_with_context(&context, &tau_hat, &eval).unwrap());
            true_values.push(pehe(&tau_hat, &truth.tau).unwrap());
        }
        rhos.push(spearman(&if_values, &true_values).unwrap());
    }
    let med = median(rhos.clone());
    let elapsed = start.elapsed();
    assert!(
        med >= 0.6,
        "median Spearman {med} below 0.6 (per-seed: {rhos:?})"
    );
    assert!(elapsed.as_secs() < 600, "runtime {elapsed:?} over 10 min");
    println!(
        "[PASS] criterion 5: IF-PEHE vs PEHE median Spearman {med:.3} over {} candidates \
         (>= 0.6), {elapsed:?}",
        candidates.len()
    );
}

#[test]
fn criterion_06_balance_penalty_shrinks_representation_mmd() {
    let start = Instant::now();
    // Gradient gates first.
    let ds_small = ConfoundedDgp {
        n: 12,
        d: 4,
        ..Default::default()
    }
    .generate(RngSeed(1))
    .unwrap();
    let mlp_err = gradient_check(
        &MlpSpec {
            hidden: vec![16, 8],
            ..Default::default()
        },
        ds_small.covariates.view(),
        ds_small.outcome.view(),
    )
    .unwrap();
    assert!(mlp_err < 1e-4, "mlp gradient check {mlp_err}");
    let full_err = repnet_gradient_check(
        &RepNetConfig {
            rep_layers: vec![8, 4],
            head_layers: vec![4],
            ipm_weight: 1.0,
            kernel: KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed { sigma: 1.0 },
            },
            ..Default::default()
        },
        ds_small.covariates.view(),
        ds_small.treatment.view(),
        ds_small.outcome.view(),
    )
    .unwrap();
    assert!(full_err < 1e-4, "full-loss gradient check {full_err}");

    let mut wins = 0usize;
    let trials = 10u64;
    for seed in 0..trials {
        let ds = ConfoundedDgp {
            n: 1000,
            ..Default::default()
        }
        .generate(RngSeed(seed))
        .unwrap();
        let base = RepNetConfig {
            rep_layers: vec![16, 8],
            head_layers: vec![8],
            epochs: 120,
            seed,
            ..Default::default()
        };
        let tarnet = fit_repnet(
            &ds,
            &RepNetConfig {
                ipm_weight: 0.0,
                ..base.clone()
            },
        )
        .unwrap();
        let cfrnet = fit_repnet(
            &ds,
            &RepNetConfig {
                ipm_weight: 1.0,
                ..base
            },
        )
        .unwrap();
        let rep_mmd = |model: &hte_core::replearn::RepNetModel| {
            let rep = model.representation(ds.covariates.view());
            let treated = ds.treated_indices();
            let control = ds.control_indices();
            let rep_t = rep.select(ndarray::Axis(0), &treated);
            let rep_c = rep.select(ndarray::Axis(0), &control);
            mmd(rep_t.view(), rep_c.view(), &KernelSpec::default())
                .unwrap()
                .value
        };
        if rep_mmd(&cfrnet) < rep_mmd(&tarnet) {
            wins += 1;
        }
    }
    let elapsed = start.elapsed();
    assert!(
        wins >= 8,
        "penalized run beat unpenalized in only {wins}/{trials} seeds"
    );
    println!(
        "[PASS] criterion 6: representation MMD lower with penalty in {wins}/{trials} seeds \
         (>= 8), gradient checks {mlp_err:.2e}/{full_err:.2e}, {elapsed:?}"
    );
}

#[test]
fn criterion_07_randomized_auroc_near_half() {
    let ds = LinearDgp {
        n: 10_000,
        ..Default::default()
    }
    .generate(RngSeed(0))
    .unwrap();
    let scores = estimate_propensity(&ds, &LearnerSpec::Logistic(LogisticSpec::default())).unwrap();
    let value = auroc(&scores.scores, &ds.treatment).unwrap();
    assert!(
        (0.47..=0.53).contains(&value),
        "randomized-treatment AUROC {value} outside [0.47, 0.53]"
    );
    println!("[PASS] criterion 7: randomized AUROC {value:.4} in [0.47, 0.53]");
}

#[test]
fn criterion_08_cohort_determinism_and_arithmetic() {
    // Byte-identical matrix under a fixed seed.
    let claims = ClaimsConfig {
        n_patients: 1200,
        ..Default::default()
    };
    let spec = CohortSpec::default();
    let bytes = |seed: u64| {
        let timelines = generate_claims(&claims, RngSeed(seed)).unwrap();
        let out = run_pipeline(timelines, &spec, RngSeed(seed).derive(1)).unwrap();
        hte_core::io::dataset_to_csv_bytes(&out.matrix.to_dataset().unwrap()).unwrap()
    };
    assert_eq!(
        bytes(4),
        bytes(4),
        "same seed must give a byte-identical matrix"
    );
    assert_ne!(bytes(4), bytes(5));

    // Split arithmetic on the 11,285-row fixture.
    let split = hte_core::split(11_285, (6.0, 2.0, 2.0), RngSeed(0)).unwrap();
    assert_eq!(split.sizes(), (6771, 2257, 2257));

    // Log transform: count 3 -> 2.0, via a hand fixture through the
    // covariate builder, plus exact filter behavior.
    let eligibility = EligibilitySpec::default();
    let mk = |pid: u64, common: u32| {
        let mut events = vec![cohort::EventRecord {
            patient_id: pid,
            day: 50,
            code: if pid.is_multiple_of(2) {
                "DB00471"
            } else {
                "DB01001"
            }
            .into(),
            system: cohort::CodeSystem::Medication,
        }];
        for k in 0..common {
            events.push(cohort::EventRecord {
                patient_id: pid,
                day: 60 + k,
                code: "common".into(),
                system: cohort::CodeSystem::Diagnosis,
            });
        }
        events.push(cohort::EventRecord {
            patient_id: pid,
            day: 70,
            code: "flat".into(),
            system: cohort::CodeSystem::Diagnosis,
        });
        if pid == 1 {
            events.push(cohort::EventRecord {
                patient_id: pid,
                day: 80,
                code: "rare".into(),
                system: cohort::CodeSystem::Diagnosis,
            });
        }
        cohort::LabeledPatient {
            timeline: cohort::PatientTimeline {
                patient_id: pid,
                birth_year: 1930,
                sex: 0,
                race: 0,
                events,
                truth: None,
            },
            followup_start: 50,
            treated: pid.is_multiple_of(2),
            med_event_count: 1,
        }
    };
    let labeled = LabeledCohort {
        patients: vec![mk(1, 3), mk(2, 0), mk(3, 7), mk(4, 1)],
        label_counts: Default::default(),
    };
    let matrix = build_covariates(&labeled, &eligibility, 0.3, 0.2).unwrap();
    let j = matrix
        .feature_names
        .iter()
        .position(|f| f == "common")
        .unwrap();
    assert_eq!(
        matrix.covariates[[0, j]],
        2.0,
        "log2(1+3) must be exactly 2"
    );
    assert!(
        !matrix.feature_names.contains(&"rare".to_string()),
        "prevalence filter"
    );
    assert!(
        !matrix.feature_names.contains(&"flat".to_string()),
        "variance filter"
    );
    println!(
        "[PASS] criterion 8: byte-identical cohort matrix, split (6771, 2257, 2257), \
         log2(1+3)=2.0, designed columns dropped"
    );
}

#[test]
fn criterion_09_shapley_efficiency_at_d8() {
    let train = HeterogeneousDgp {
        n: 1500,
        d: 8,
        noise: 0.3,
        ..Default::default()
    }
    .generate(RngSeed(11))
    .unwrap();
    let model = fit_t_learner(&train, &forest(40, 3)).unwrap();
    let baseline = mean_baseline(&train);
    let base_tau = model.predict_tau_row(baseline.view());
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let instance = train.covariates.row(i).to_owned();
        let phi = exact_shapley(&model, &instance, &baseline).unwrap();
        let total: f64 = phi.iter().sum();
        let gap = (total - (model.predict_tau_row(instance.view()) - base_tau)).abs();
        worst = worst.max(gap);
        assert!(gap <= 1e-8, "efficiency gap {gap} on instance {i}");
    }
    println!(
        "[PASS] criterion 9: Shapley efficiency on 100 instances, worst gap {worst:.2e} (<= 1e-8)"
    );
}

#[test]
fn criterion_10_metric_identities() {
    // pehe identities.
    let tau = array![0.4, -1.0, 2.5, 0.0, 0.7];
    assert_eq!(pehe(&tau, &tau).unwrap(), 0.0);
    let delta = 0.37;
    let shifted = &tau + delta;
    assert!((pehe(&shifted, &tau).unwrap() - delta * delta).abs() < 1e-12);

    // ermse of a refit-invariant estimator: a fully L1-saturated linear
    // S-learner zeroes every coefficient, so tau_hat is identically zero
    // regardless of the training data.
    let a = HeterogeneousDgp {
        n: 300,
        ..Default::default()
    }
    .generate(RngSeed(1))
    .unwrap();
    let b = HeterogeneousDgp {
        n: 300,
        ..Default::default()
    }
    .generate(RngSeed(2))
    .unwrap();
    let constant_config = EstimatorConfig::S {
        id: None,
        outcome_spec: LearnerSpec::Linear(LinearSpec {
            alpha: 1e6,
            l1_ratio: 1.0,
            ..Default::default()
        }),
    };
    let value = ermse(&constant_config, &a, &b, RngSeed(0)).unwrap();
    assert_eq!(value, 0.0, "refit-invariant estimator must have zero ermse");

    // IF-PEHE single-unit fixture under the documented convention.
    let eval =
        ObservationalDataset::unnamed(array![[0.0]], array![1.0], array![1.0], None).unwrap();
    let context = IfPeheContext {
        t_bar: array![1.0],
        pi_hat: PropensityScores::from_raw(array![0.5], (0.01, 0.99)).unwrap(),
        degenerate_propensity: false,
    };
    let got = if_pehe_with_context(&context, &Array1::from(vec![1.0]), &eval).unwrap();
    assert!(
        (got - (-2.0)).abs() < 1e-12,
        "single-unit fixture gave {got}"
    );
    println!(
        "[PASS] criterion 10: pehe identities, refit-invariant ermse 0, \
         single-unit influence fixture -2"
    );
}
