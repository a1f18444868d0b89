//! Fit and metric benchmarks over a fixed synthetic dataset.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hte_core::learners::{fit_classifier, fit_regressor, BoostSpec, ForestSpec, LearnerSpec};
use hte_core::metalearners::{fit_s_learner, fit_t_learner};
use hte_core::propensity::{auroc, estimate_propensity};
use hte_core::replearn::{mmd, KernelSpec};
use hte_core::synth::{ConfoundedDgp, HeterogeneousDgp};
use hte_core::{ObservationalDataset, RngSeed};

fn dataset(n: usize) -> ObservationalDataset {
    HeterogeneousDgp {
        n,
        d: 8,
        noise: 0.3,
        ..Default::default()
    }
    .generate(RngSeed(42))
    .unwrap()
}

fn bench_base_learners(c: &mut Criterion) {
    let ds = dataset(2000);
    let mut group = c.benchmark_group("base_learners");
    group.sample_size(10);
    group.bench_function("forest_100_trees", |b| {
        let spec = LearnerSpec::Forest(ForestSpec::default());
        b.iter(|| {
            black_box(fit_regressor(&spec, ds.covariates.view(), ds.outcome.view()).unwrap())
        });
    });
    group.bench_function("boosted_stumps_200", |b| {
        let spec = LearnerSpec::BoostedStumps(BoostSpec::default());
        b.iter(|| {
            black_box(fit_regressor(&spec, ds.covariates.view(), ds.outcome.view()).unwrap())
        });
    });
    group.finish();
}

fn bench_metalearners(c: &mut Criterion) {
    let ds = dataset(2000);
    let spec = LearnerSpec::Forest(ForestSpec {
        n_trees: 50,
        ..Default::default()
    });
    let mut group = c.benchmark_group("metalearners");
    group.sample_size(10);
    group.bench_function("s_learner_forest", |b| {
        b.iter(|| black_box(fit_s_learner(&ds, &spec).unwrap()));
    });
    group.bench_function("t_learner_forest", |b| {
        b.iter(|| black_box(fit_t_learner(&ds, &spec).unwrap()));
    });
    group.finish();
}

fn bench_propensity(c: &mut Criterion) {
    let ds = ConfoundedDgp {
        n: 5000,
        d: 8,
        ..Default::default()
    }
    .generate(RngSeed(7))
    .unwrap();
    let mut group = c.benchmark_group("propensity");
    group.sample_size(10);
    group.bench_function("logistic_oof_plus_auroc", |b| {
        let spec = LearnerSpec::Logistic(Default::default());
        b.iter(|| {
            let scores = estimate_propensity(&ds, &spec).unwrap();
            black_box(auroc(&scores.scores, &ds.treatment).unwrap())
        });
    });
    group.bench_function("classifier_forest", |b| {
        let spec = LearnerSpec::Forest(ForestSpec {
            n_trees: 50,
            ..Default::default()
        });
        b.iter(|| {
            black_box(fit_classifier(&spec, ds.covariates.view(), ds.treatment.view()).unwrap())
        });
    });
    group.finish();
}

fn bench_mmd(c: &mut Criterion) {
    let ds = dataset(1024);
    let treated = ds.subset(&ds.treated_indices());
    let control = ds.subset(&ds.control_indices());
    let mut group = c.benchmark_group("mmd");
    for &size in &[128usize, 512] {
        let head = |n: usize| (0..n).collect::<Vec<usize>>();
        let a = treated.subset(&head(size.min(treated.n()))).covariates;
        let b_m = control.subset(&head(size.min(control.n()))).covariates;
        group.bench_with_input(BenchmarkId::new("rbf_median", size), &size, |bench, _| {
            bench.iter(|| black_box(mmd(a.view(), b_m.view(), &KernelSpec::default()).unwrap()));
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_base_learners,
    bench_metalearners,
    bench_propensity,
    bench_mmd
);
criterion_main!(benches);
