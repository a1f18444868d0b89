//! Propensity-score estimation, its AUROC diagnostic, covariate-balance
//! reporting, and the inverse-probability-weighted ATE estimator.
//!
//! Scores are out-of-fold by default (5-fold cross-fitting) so the AUROC
//! diagnostic is not self-fulfilling, then clipped into an open interval to
//! keep the inverse weights bounded.

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::folds::assign_folds;
use crate::learners::{fit_classifier, LearnerSpec};
use crate::seed::RngSeed;

pub const DEFAULT_CLIP: (f64, f64) = (0.01, 0.99);
pub const DEFAULT_FOLDS: usize = 5;

/// Estimated e(x) = P[T=1|x] per subject, clipped into `clip_bounds`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropensityScores {
    pub scores: Array1<f64>,
    pub clip_bounds: (f64, f64),
}

impl PropensityScores {
    /// Clip raw scores into the open interval. Scores already inside the
    /// bounds are returned bit-identical.
    pub fn from_raw(raw: Array1<f64>, clip_bounds: (f64, f64)) -> Result<Self> {
        let (lo, hi) = clip_bounds;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "clip bounds must satisfy 0 < lo < hi < 1, got ({lo}, {hi})"
            )));
        }
        let scores = raw.mapv(|v| v.clamp(lo, hi));
        Ok(PropensityScores {
            scores,
            clip_bounds,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// IPTW weight for unit i: T/e + (1-T)/(1-e).
    pub fn iptw_weight(&self, i: usize, treated: bool) -> f64 {
        if treated {
            1.0 / self.scores[i]
        } else {
            1.0 / (1.0 - self.scores[i])
        }
    }
}

/// Out-of-fold propensity estimation with the default fold count and clip
/// bounds; the learner spec's seed drives fold assignment and fitting.
pub fn estimate_propensity(
    dataset: &ObservationalDataset,
    classifier_spec: &LearnerSpec,
) -> Result<PropensityScores> {
    estimate_propensity_with(
        dataset,
        classifier_spec,
        DEFAULT_FOLDS,
        DEFAULT_CLIP,
        classifier_spec.seed(),
    )
}

pub fn estimate_propensity_with(
    dataset: &ObservationalDataset,
    classifier_spec: &LearnerSpec,
    folds: usize,
    clip: (f64, f64),
    seed: RngSeed,
) -> Result<PropensityScores> {
    dataset.require_both_arms()?;
    let n = dataset.n();
    let fold_of = assign_folds(&dataset.treatment, folds, seed.derive(0))?;
    let mut raw = Array1::<f64>::zeros(n);
    for f in 0..folds {
        let train_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] != f).collect();
        let score_idx: Vec<usize> = (0..n).filter(|&i| fold_of[i] == f).collect();
        if score_idx.is_empty() {
            continue;
        }
        let train = dataset.subset(&train_idx);
        let spec = classifier_spec.with_seed(seed.derive(1 + f as u64));
        let model = fit_classifier(&spec, train.covariates.view(), train.treatment.view())?;
        for &i in &score_idx {
            raw[i] = model.predict_proba_row(dataset.covariates.row(i));
        }
    }
    PropensityScores::from_raw(raw, clip)
}

/// Probability that a random treated score exceeds a random control score,
/// ties counted one half (rank form of the Mann-Whitney statistic).
pub fn auroc(scores: &Array1<f64>, treatment: &Array1<f64>) -> Result<f64> {
    let n = scores.len();
    if treatment.len() != n {
        return Err(Error::Structural("auroc: length mismatch".into()));
    }
    let n1 = treatment.iter().filter(|&&t| t == 1.0).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::UndefinedMetric(
            "auroc needs both treated and control units".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks over tie groups.
    let mut rank_sum_treated = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if treatment[idx] == 1.0 {
                rank_sum_treated += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_treated - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AteMethod {
    Iptw,
    NaiveDifference,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AteEstimate {
    pub value: f64,
    pub n: usize,
    pub method: AteMethod,
}

/// ATE = (1/n) Σ [T·Y/e(X) - (1-T)·Y/(1-e(X))].
pub fn iptw_ate(dataset: &ObservationalDataset, scores: &PropensityScores) -> Result<AteEstimate> {
    let n = dataset.n();
    if scores.len() != n {
        return Err(Error::Structural(format!(
            "{} scores for {n} rows",
            scores.len()
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let e = scores.scores[i];
        total += dataset.treatment[i] * dataset.outcome[i] / e
            - (1.0 - dataset.treatment[i]) * dataset.outcome[i] / (1.0 - e);
    }
    let value = total / n as f64;
    if !value.is_finite() {
        return Err(Error::Structural("iptw estimate is non-finite".into()));
    }
    Ok(AteEstimate {
        value,
        n,
        method: AteMethod::Iptw,
    })
}

/// Unadjusted difference of arm means; the biased baseline IPTW is compared
/// against.
pub fn naive_ate(dataset: &ObservationalDataset) -> Result<AteEstimate> {
    dataset.require_both_arms()?;
    let (mut sum1, mut n1, mut sum0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..dataset.n() {
        if dataset.treatment[i] == 1.0 {
            sum1 += dataset.outcome[i];
            n1 += 1;
        } else {
            sum0 += dataset.outcome[i];
            n0 += 1;
        }
    }
    Ok(AteEstimate {
        value: sum1 / n1 as f64 - sum0 / n0 as f64,
        n: dataset.n(),
        method: AteMethod::NaiveDifference,
    })
}

/// Standardized mean difference of one feature before and after weighting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureBalance {
    pub feature: String,
    pub smd_unweighted: f64,
    pub smd_weighted: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BalanceReport {
    pub features: Vec<FeatureBalance>,
    pub n_treated: usize,
    pub n_control: usize,
    /// Kish effective sample size (Σw)²/Σw² per arm under IPTW weights.
    pub effective_n_treated: f64,
    pub effective_n_control: f64,
}

/// Per-feature SMD, unweighted and IPTW-weighted:
/// (μ_t - μ_c) / sqrt((σ²_t + σ²_c)/2) with population variances.
pub fn balance_report(
    dataset: &ObservationalDataset,
    scores: &PropensityScores,
) -> Result<BalanceReport> {
    dataset.require_both_arms()?;
    if scores.len() != dataset.n() {
        return Err(Error::Structural("balance: score length mismatch".into()));
    }
    let treated = dataset.treated_indices();
    let control = dataset.control_indices();
    let unit = |_: usize| 1.0;
    let iptw_t = |i: usize| scores.iptw_weight(i, true);
    let iptw_c = |i: usize| scores.iptw_weight(i, false);

    let mut features = Vec::with_capacity(dataset.dim());
    for (j, col) in dataset.covariates.axis_iter(Axis(1)).enumerate() {
        let col_at = |i: usize| col[i];
        let smd_unweighted = smd(&treated, &control, &col_at, &unit, &unit);
        let smd_weighted = smd(&treated, &control, &col_at, &iptw_t, &iptw_c);
        features.push(FeatureBalance {
            feature: dataset.feature_names[j].clone(),
            smd_unweighted,
            smd_weighted,
        });
    }
    let (ess_t, ess_c) = (
        effective_n(&treated, &iptw_t),
        effective_n(&control, &iptw_c),
    );
    Ok(BalanceReport {
        features,
        n_treated: treated.len(),
        n_control: control.len(),
        effective_n_treated: ess_t,
        effective_n_control: ess_c,
    })
}

fn weighted_moments(
    idx: &[usize],
    value: &dyn Fn(usize) -> f64,
    weight: &dyn Fn(usize) -> f64,
) -> (f64, f64) {
    let w_sum: f64 = idx.iter().map(|&i| weight(i)).sum();
    let mean = idx.iter().map(|&i| weight(i) * value(i)).sum::<f64>() / w_sum;
    let var = idx
        .iter()
        .map(|&i| {
            let c = value(i) - mean;
            weight(i) * c * c
        })
        .sum::<f64>()
        / w_sum;
    (mean, var)
}

fn smd(
    treated: &[usize],
    control: &[usize],
    value: &dyn Fn(usize) -> f64,
    weight_t: &dyn Fn(usize) -> f64,
    weight_c: &dyn Fn(usize) -> f64,
) -> f64 {
    let (m_t, v_t) = weighted_moments(treated, value, weight_t);
    let (m_c, v_c) = weighted_moments(control, value, weight_c);
    let num = m_t - m_c;
    if num.abs() < 1e-15 {
        return 0.0;
    }
    let pooled = ((v_t + v_c) / 2.0).sqrt();
    num / pooled.max(1e-12)
}

fn effective_n(idx: &[usize], weight: &dyn Fn(usize) -> f64) -> f64 {
    let s: f64 = idx.iter().map(|&i| weight(i)).sum();
    let s2: f64 = idx.iter().map(|&i| weight(i) * weight(i)).sum();
    s * s / s2
}

/// Write `balance.csv` with columns feature, smd_unweighted, smd_weighted.
pub fn write_balance_csv(report: &BalanceReport, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .features
        .iter()
        .map(|f| {
            vec![
                f.feature.clone(),
                format!("{}", f.smd_unweighted),
                format!("{}", f.smd_weighted),
            ]
        })
        .collect();
    let bytes =
        crate::io::rows_to_csv_bytes(&["feature", "smd_unweighted", "smd_weighted"], &rows)?;
    crate::io::atomic_write(path, &bytes)
}

/// Write `propensity_hist.csv` with columns arm, bin_lo, bin_hi, weight:
/// IPTW-weighted score histograms per arm on a fixed [0,1] grid.
pub fn write_propensity_hist_csv(
    dataset: &ObservationalDataset,
    scores: &PropensityScores,
    bins: usize,
    path: &Path,
) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("histogram needs at least one bin".into()));
    }
    let mut treated_w = vec![0.0f64; bins];
    let mut control_w = vec![0.0f64; bins];
    for i in 0..dataset.n() {
        let s = scores.scores[i];
        let b = ((s * bins as f64) as usize).min(bins - 1);
        if dataset.treatment[i] == 1.0 {
            treated_w[b] += scores.iptw_weight(i, true);
        } else {
            control_w[b] += scores.iptw_weight(i, false);
        }
    }
    let mut rows = Vec::with_capacity(2 * bins);
    for (arm, weights) in [("treated", &treated_w), ("control", &control_w)] {
        for (b, &w) in weights.iter().enumerate() {
            rows.push(vec![
                arm.to_string(),
                format!("{}", b as f64 / bins as f64),
                format!("{}", (b + 1) as f64 / bins as f64),
                format!("{w}"),
            ]);
        }
    }
    let bytes = crate::io::rows_to_csv_bytes(&["arm", "bin_lo", "bin_hi", "weight"], &rows)?;
    crate::io::atomic_write(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::LogisticSpec;
    use crate::synth::{ConfoundedDgp, GeneratorConfig};
    use ndarray::array;

    #[test]
    fn auroc_perfect_separation() {
        let scores = array![0.9, 0.8, 0.3, 0.2];
        let t = array![1.0, 1.0, 0.0, 0.0];
        assert_eq!(auroc(&scores, &t).unwrap(), 1.0);
    }

    #[test]
    fn auroc_enumerated_pairs() {
        // Treated scores {0.2, 0.6}, control {0.8, 0.4}: one of four pairs
        // has the treated score on top.
        let scores = array![0.2, 0.8, 0.6, 0.4];
        let t = array![1.0, 0.0, 1.0, 0.0];
        assert_eq!(auroc(&scores, &t).unwrap(), 0.25);
    }

    #[test]
    fn auroc_all_ties_is_half() {
        let scores = array![0.5, 0.5, 0.5, 0.5];
        let t = array![1.0, 0.0, 1.0, 0.0];
        assert_eq!(auroc(&scores, &t).unwrap(), 0.5);
    }

    #[test]
    fn auroc_one_class_is_undefined() {
        let scores = array![0.5, 0.6];
        let t = array![1.0, 1.0];
        assert!(matches!(auroc(&scores, &t), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn iptw_hand_values() {
        let ds = ObservationalDataset::unnamed(
            array![[0.0], [0.0]],
            array![1.0, 0.0],
            array![2.0, 1.0],
            None,
        )
        .unwrap();
        let scores = PropensityScores::from_raw(array![0.5, 0.5], DEFAULT_CLIP).unwrap();
        assert_eq!(iptw_ate(&ds, &scores).unwrap().value, 1.0);

        let ds2 = ObservationalDataset::unnamed(
            array![[0.0], [0.0]],
            array![1.0, 0.0],
            array![3.0, 3.0],
            None,
        )
        .unwrap();
        assert_eq!(iptw_ate(&ds2, &scores).unwrap().value, 0.0);

        let ds3 = ObservationalDataset::unnamed(
            array![[0.0], [0.0], [0.0], [0.0]],
            array![1.0, 1.0, 0.0, 0.0],
            array![1.0, 1.0, 0.0, 0.0],
            None,
        )
        .unwrap();
        let scores3 = PropensityScores::from_raw(array![0.5, 0.5, 0.5, 0.5], DEFAULT_CLIP).unwrap();
        assert_eq!(iptw_ate(&ds3, &scores3).unwrap().value, 1.0);
    }

    #[test]
    fn clipping_only_moves_outside_scores() {
        let raw = array![0.005, 0.5, 0.37, 0.999];
        let p = PropensityScores::from_raw(raw, (0.01, 0.99)).unwrap();
        assert_eq!(p.scores, array![0.01, 0.5, 0.37, 0.99]);
    }

    #[test]
    fn single_arm_estimation_is_positivity_error() {
        let ds = ObservationalDataset::unnamed(
            array![[0.0], [1.0], [2.0]],
            array![1.0, 1.0, 1.0],
            array![0.0, 1.0, 0.0],
            None,
        )
        .unwrap();
        let spec = LearnerSpec::Logistic(LogisticSpec::default());
        assert!(matches!(
            estimate_propensity(&ds, &spec),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn sharp_assignment_pushes_scores_to_bounds() {
        // T = 1{x0 > 0}; out-of-fold logistic scores should sit near the
        // clip bounds on each side. Oracle: a direct logistic fit on the
        // 1-d rule is arbitrarily steep, so clipped scores are the bounds.
        let mut rng = RngSeed(2).rng();
        use rand::Rng;
        let n = 400;
        let mut x = ndarray::Array2::<f64>::zeros((n, 1));
        let mut t = Array1::<f64>::zeros(n);
        for i in 0..n {
            x[[i, 0]] = rng.gen_range(-2.0..2.0);
            if x[[i, 0]].abs() < 0.05 {
                x[[i, 0]] += 0.1; // keep a margin so folds stay separable
            }
            t[i] = f64::from(x[[i, 0]] > 0.0);
        }
        let ds = ObservationalDataset::unnamed(x, t, Array1::zeros(n), None).unwrap();
        let spec = LearnerSpec::Logistic(LogisticSpec {
            max_iter: 3000,
            ..Default::default()
        });
        let p = estimate_propensity(&ds, &spec).unwrap();
        let mut low_side = 0usize;
        let mut high_side = 0usize;
        for i in 0..n {
            if ds.treatment[i] == 1.0 && p.scores[i] > 0.9 {
                high_side += 1;
            }
            if ds.treatment[i] == 0.0 && p.scores[i] < 0.1 {
                low_side += 1;
            }
        }
        assert!(high_side as f64 > 0.9 * ds.treated_indices().len() as f64);
        assert!(low_side as f64 > 0.9 * ds.control_indices().len() as f64);
    }

    #[test]
    fn randomized_treatment_scores_near_treated_fraction() {
        let ds = GeneratorConfig::Linear(crate::synth::LinearDgp {
            n: 600,
            ..Default::default()
        })
        .generate(RngSeed(8))
        .unwrap();
        let spec = LearnerSpec::Logistic(LogisticSpec::default());
        let p = estimate_propensity(&ds, &spec).unwrap();
        let frac = ds.treated_indices().len() as f64 / ds.n() as f64;
        let mean = p.scores.mean().unwrap();
        assert!((mean - frac).abs() < 0.05, "mean {mean} vs fraction {frac}");
        // No signal: scores concentrate, i.e. low spread.
        let var = p.scores.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        assert!(var < 0.01, "variance {var}");
    }

    #[test]
    fn balance_smd_shift_and_weighting() {
        // Feature shifted by +1 in the treated arm with unit variance in
        // both arms: unweighted SMD = 1 exactly on a two-point-mass design.
        let x = array![[2.0], [0.0], [1.0], [-1.0]];
        let t = array![1.0, 1.0, 0.0, 0.0];
        let ds = ObservationalDataset::unnamed(x, t, array![0.0, 0.0, 0.0, 0.0], None).unwrap();
        let scores = PropensityScores::from_raw(array![0.5, 0.5, 0.5, 0.5], DEFAULT_CLIP).unwrap();
        let report = balance_report(&ds, &scores).unwrap();
        assert!((report.features[0].smd_unweighted - 1.0).abs() < 1e-12);
        // Uniform weights: weighted equals unweighted.
        assert!((report.features[0].smd_weighted - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_arms_have_zero_smd() {
        let x = array![[1.0], [2.0], [1.0], [2.0]];
        let t = array![1.0, 1.0, 0.0, 0.0];
        let ds = ObservationalDataset::unnamed(x, t, Array1::zeros(4), None).unwrap();
        let scores = PropensityScores::from_raw(array![0.4, 0.6, 0.4, 0.6], DEFAULT_CLIP).unwrap();
        let report = balance_report(&ds, &scores).unwrap();
        assert_eq!(report.features[0].smd_unweighted, 0.0);
    }

    #[test]
    fn true_propensity_weighting_improves_confounder_balance() {
        let ds = GeneratorConfig::Confounded(ConfoundedDgp {
            n: 4000,
            ..Default::default()
        })
        .generate(RngSeed(4))
        .unwrap();
        let e = ds.truth.as_ref().unwrap().true_propensity.clone().unwrap();
        let scores = PropensityScores::from_raw(e, DEFAULT_CLIP).unwrap();
        let report = balance_report(&ds, &scores).unwrap();
        // x0 is the confounder; weighting must shrink its imbalance.
        let f0 = &report.features[0];
        assert!(
            f0.smd_weighted.abs() < f0.smd_unweighted.abs(),
            "weighted {} vs unweighted {}",
            f0.smd_weighted,
            f0.smd_unweighted
        );
        assert!(f0.smd_unweighted.abs() > 0.3);
    }
}
