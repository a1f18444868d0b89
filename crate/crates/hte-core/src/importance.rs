//! Feature attribution for fitted effect models: permutation importance at
//! scale, exact Shapley values by subset enumeration for small feature
//! counts. Attribution targets the effect prediction τ̂(x), not the outcome.

use std::path::Path;

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::estimator::CateEstimator;
use crate::seed::RngSeed;

pub const MAX_EXACT_SHAPLEY_FEATURES: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImportanceMethod {
    Permutation,
    ExactShapley,
}

/// Per-feature scores, plus per-instance attributions for the exact method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: ImportanceMethod,
    /// (feature name, score), in feature order.
    pub scores: Vec<(String, f64)>,
    /// instance -> per-feature attributions (exact Shapley only).
    pub attributions: Option<Vec<Vec<f64>>>,
}

impl ImportanceReport {
    /// Features with their rank (1 = highest score).
    pub fn ranked(&self) -> Vec<(String, f64, usize)> {
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].1.partial_cmp(&self.scores[a].1).unwrap());
        let mut out = vec![(String::new(), 0.0, 0); self.scores.len()];
        for (rank, &j) in order.iter().enumerate() {
            out[j] = (self.scores[j].0.clone(), self.scores[j].1, rank + 1);
        }
        out
    }
}

/// Mean squared change of τ̂ when one column is shuffled, averaged over
/// `repeats` seeded permutations.
pub fn permutation_importance(
    model: &dyn CateEstimator,
    dataset: &ObservationalDataset,
    repeats: usize,
    seed: RngSeed,
) -> Result<ImportanceReport> {
    let d = dataset.dim();
    if d == 0 {
        return Err(Error::Config(
            "permutation importance needs at least one feature".into(),
        ));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be >= 1".into()));
    }
    let n = dataset.n();
    let base = model.predict_tau(dataset.covariates.view());
    let mut scores = Vec::with_capacity(d);
    for j in 0..d {
        let mut total = 0.0;
        for r in 0..repeats {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut seed.derive((j * repeats + r) as u64).rng());
            let mut shuffled = dataset.covariates.clone();
            for (i, &src) in order.iter().enumerate() {
                shuffled[[i, j]] = dataset.covariates[[src, j]];
            }
            let permuted = model.predict_tau(shuffled.view());
            let mse = permuted
                .iter()
                .zip(base.iter())
                .map(|(p, b)| (p - b) * (p - b))
                .sum::<f64>()
                / n as f64;
            total += mse;
        }
        scores.push((dataset.feature_names[j].clone(), total / repeats as f64));
    }
    Ok(ImportanceReport {
        method: ImportanceMethod::Permutation,
        scores,
        attributions: None,
    })
}

/// Column means of the dataset: the default reference row for absent
/// features.
pub fn mean_baseline(dataset: &ObservationalDataset) -> Array1<f64> {
    dataset
        .covariates
        .mean_axis(Axis(0))
        .expect("non-empty dataset")
}

/// Classic Shapley attribution of τ̂(instance) - τ̂(baseline) over feature
/// coalitions, by full subset enumeration. Features absent from a
/// coalition take the baseline value. Exact efficiency holds:
/// Σ attributions = τ̂(instance) - τ̂(baseline).
pub fn exact_shapley(
    model: &dyn CateEstimator,
    instance: &Array1<f64>,
    baseline: &Array1<f64>,
) -> Result<Vec<f64>> {
    let d = instance.len();
    if d == 0 || baseline.len() != d {
        return Err(Error::Config(
            "instance and baseline must share a nonzero length".into(),
        ));
    }
    if d > MAX_EXACT_SHAPLEY_FEATURES {
        return Err(Error::Config(format!(
            "exact shapley enumerates 2^d coalitions and is capped at d <= \
             {MAX_EXACT_SHAPLEY_FEATURES}; got d = {d}. Use permutation importance instead"
        )));
    }
    // v(S) for every coalition mask.
    let total = 1usize << d;
    let mut values = vec![0.0f64; total];
    let mut row = baseline.clone();
    for (mask, value) in values.iter_mut().enumerate() {
        for j in 0..d {
            row[j] = if mask & (1 << j) != 0 {
                instance[j]
            } else {
                baseline[j]
            };
        }
        *value = model.predict_tau_row(row.view());
    }
    // Exact factorial weights: s!(d-s-1)!/d! for coalition size s.
    let mut factorial = vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    let weight = |s: usize| factorial[s] * factorial[d - s - 1] / factorial[d];

    let mut attributions = vec![0.0f64; d];
    for (mask, &v_s) in values.iter().enumerate() {
        let s = (mask as u32).count_ones() as usize;
        for (j, attribution) in attributions.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                *attribution += weight(s) * (values[mask | (1 << j)] - v_s);
            }
        }
    }
    Ok(attributions)
}

/// Exact Shapley attribution over a batch of instances.
pub fn exact_shapley_report(
    model: &dyn CateEstimator,
    dataset: &ObservationalDataset,
    instances: &[usize],
) -> Result<ImportanceReport> {
    let baseline = mean_baseline(dataset);
    let mut attributions = Vec::with_capacity(instances.len());
    let d = dataset.dim();
    let mut mean_abs = vec![0.0f64; d];
    for &i in instances {
        let row = dataset.covariates.row(i).to_owned();
        let phi = exact_shapley(model, &row, &baseline)?;
        for j in 0..d {
            mean_abs[j] += phi[j].abs() / instances.len() as f64;
        }
        attributions.push(phi);
    }
    Ok(ImportanceReport {
        method: ImportanceMethod::ExactShapley,
        scores: dataset
            .feature_names
            .iter()
            .cloned()
            .zip(mean_abs)
            .collect(),
        attributions: Some(attributions),
    })
}

/// Write `importance.csv` with columns feature, score, rank.
pub fn write_importance_csv(report: &ImportanceReport, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .ranked()
        .into_iter()
        .map(|(feature, score, rank)| vec![feature, format!("{score}"), rank.to_string()])
        .collect();
    let bytes = crate::io::rows_to_csv_bytes(&["feature", "score", "rank"], &rows)?;
    crate::io::atomic_write(path, &bytes)
}

/// Write `attributions.csv` with columns instance_id, feature, value.
pub fn write_attributions_csv(
    report: &ImportanceReport,
    instance_ids: &[usize],
    path: &Path,
) -> Result<()> {
    let attributions = report
        .attributions
        .as_ref()
        .ok_or_else(|| Error::Config("report carries no per-instance attributions".into()))?;
    let mut rows = Vec::new();
    for (row, &id) in attributions.iter().zip(instance_ids) {
        for (j, value) in row.iter().enumerate() {
            rows.push(vec![
                id.to_string(),
                report.scores[j].0.clone(),
                format!("{value}"),
            ]);
        }
    }
    let bytes = crate::io::rows_to_csv_bytes(&["instance_id", "feature", "value"], &rows)?;
    crate::io::atomic_write(path, &bytes)
}
