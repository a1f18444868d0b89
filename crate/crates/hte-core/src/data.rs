//! Shared data model: covariates, binary treatment, outcome, and optional
//! ground-truth potential outcomes for synthetic data.
//!
//! Datasets are immutable after construction and safe to share across
//! concurrently fitting estimators.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground truth attached to synthetic data: potential outcomes under control
/// and treatment, their difference, and (when the generator knows it) the
/// true assignment probability.
///
/// `y0`/`y1` hold the noiseless potential outcomes; for noisy generators the
/// dataset's `outcome` stores the realized draw instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub y0: Array1<f64>,
    pub y1: Array1<f64>,
    /// Always `y1 - y0`, element-wise; enforced by [`GroundTruth::new`].
    pub tau: Array1<f64>,
    pub true_propensity: Option<Array1<f64>>,
}

impl GroundTruth {
    /// Build ground truth from the two potential-outcome vectors; `tau` is
    /// derived so the `tau = y1 - y0` invariant holds by construction.
    pub fn new(y0: Array1<f64>, y1: Array1<f64>, true_propensity: Option<Array1<f64>>) -> Self {
        let tau = &y1 - &y0;
        GroundTruth {
            y0,
            y1,
            tau,
            true_propensity,
        }
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Self {
        GroundTruth {
            y0: select1(&self.y0, idx),
            y1: select1(&self.y1, idx),
            tau: select1(&self.tau, idx),
            true_propensity: self.true_propensity.as_ref().map(|e| select1(e, idx)),
        }
    }
}

/// Observational data: an n×d covariate matrix, a binary treatment vector
/// and an outcome vector (binary outcomes are carried as 0/1 reals so
/// regression-style estimators apply uniformly).
#[derive(Debug, Clone)]
pub struct ObservationalDataset {
    pub covariates: Array2<f64>,
    /// Values in {0.0, 1.0}.
    pub treatment: Array1<f64>,
    pub outcome: Array1<f64>,
    pub feature_names: Vec<String>,
    pub truth: Option<GroundTruth>,
}

/// What [`ObservationalDataset::validate`] found. Structural problems are
/// hard errors; degenerate-but-legal situations are reported as flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n: usize,
    pub d: usize,
    pub n_treated: usize,
    pub n_control: usize,
    /// Human-readable warnings: empty arms, constant columns.
    pub flags: Vec<String>,
}

impl ObservationalDataset {
    pub fn new(
        covariates: Array2<f64>,
        treatment: Array1<f64>,
        outcome: Array1<f64>,
        feature_names: Vec<String>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let ds = ObservationalDataset {
            covariates,
            treatment,
            outcome,
            feature_names,
            truth,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor that names features `x0..x{d-1}`.
    pub fn unnamed(
        covariates: Array2<f64>,
        treatment: Array1<f64>,
        outcome: Array1<f64>,
        truth: Option<GroundTruth>,
    ) -> Result<Self> {
        let names = (0..covariates.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(covariates, treatment, outcome, names, truth)
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn treated_indices(&self) -> Vec<usize> {
        self.treatment
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == 1.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn control_indices(&self) -> Vec<usize> {
        self.treatment
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn arm_counts(&self) -> (usize, usize) {
        let t = self.treatment.iter().filter(|&&t| t == 1.0).count();
        (t, self.n() - t)
    }

    /// Check structural invariants and report degenerate situations.
    ///
    /// Errors on length mismatches and non-finite values; empty arms and
    /// constant covariate columns are flagged, not rejected, because some
    /// operations (e.g. single-arm outcome modeling) remain well defined.
    pub fn validate(&self) -> Result<ValidationReport> {
        let n = self.outcome.len();
        if n == 0 {
            return Err(Error::Structural("dataset has zero rows".into()));
        }
        if self.covariates.nrows() != n || self.treatment.len() != n {
            return Err(Error::Structural(format!(
                "length mismatch: covariates {} rows, treatment {}, outcome {}",
                self.covariates.nrows(),
                self.treatment.len(),
                n
            )));
        }
        if self.feature_names.len() != self.covariates.ncols() {
            return Err(Error::Structural(format!(
                "{} feature names for {} columns",
                self.feature_names.len(),
                self.covariates.ncols()
            )));
        }
        if self.covariates.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural(
                "covariates contain a non-finite entry".into(),
            ));
        }
        if self.outcome.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structural(
                "outcome contains a non-finite entry".into(),
            ));
        }
        if self.treatment.iter().any(|&t| t != 0.0 && t != 1.0) {
            return Err(Error::Structural("treatment entries must be 0 or 1".into()));
        }
        if let Some(truth) = &self.truth {
            if truth.len() != n {
                return Err(Error::Structural(
                    "ground truth length differs from dataset".into(),
                ));
            }
            for i in 0..n {
                if (truth.tau[i] - (truth.y1[i] - truth.y0[i])).abs() > 0.0 {
                    return Err(Error::Structural(format!("tau[{i}] != y1[{i}] - y0[{i}]")));
                }
            }
            if let Some(e) = &truth.true_propensity {
                if e.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                    return Err(Error::Structural("true propensity outside (0,1)".into()));
                }
            }
        }

        let (n_treated, n_control) = self.arm_counts();
        let mut flags = Vec::new();
        if n_treated == 0 {
            flags.push("treated arm empty (positivity unverifiable)".to_string());
        }
        if n_control == 0 {
            flags.push("control arm empty (positivity unverifiable)".to_string());
        }
        for (j, col) in self.covariates.axis_iter(Axis(1)).enumerate() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                flags.push(format!("constant column: {}", self.feature_names[j]));
            }
        }
        Ok(ValidationReport {
            n,
            d: self.covariates.ncols(),
            n_treated,
            n_control,
            flags,
        })
    }

    /// Row-subset copy preserving ground truth alignment. Panics on an
    /// out-of-range index.
    pub fn subset(&self, idx: &[usize]) -> Self {
        ObservationalDataset {
            covariates: self.covariates.select(Axis(0), idx),
            treatment: select1(&self.treatment, idx),
            outcome: select1(&self.outcome, idx),
            feature_names: self.feature_names.clone(),
            truth: self.truth.as_ref().map(|t| t.subset(idx)),
        }
    }

    /// Error unless both arms are non-empty (precondition of every
    /// two-arm estimator).
    pub fn require_both_arms(&self) -> Result<()> {
        let (t, c) = self.arm_counts();
        if t == 0 || c == 0 {
            return Err(Error::Positivity(format!(
                "estimator requires both arms; treated={t}, control={c}"
            )));
        }
        Ok(())
    }
}

fn select1(v: &Array1<f64>, idx: &[usize]) -> Array1<f64> {
    Array1::from_iter(idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> ObservationalDataset {
        ObservationalDataset::unnamed(
            array![[0.0, 1.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0]],
            array![1.0, 0.0, 1.0, 0.0],
            array![1.0, 0.0, 1.0, 0.0],
            None,
        )
        .unwrap()
    }

    #[test]
    fn well_formed_reports_arms() {
        let report = small().validate().unwrap();
        assert_eq!(report.n, 4);
        assert_eq!(report.d, 2);
        assert_eq!((report.n_treated, report.n_control), (2, 2));
        assert!(report.flags.is_empty());
    }

    #[test]
    fn empty_control_arm_is_flagged_not_rejected() {
        let ds = ObservationalDataset::unnamed(
            array![[0.0], [1.0], [2.0]],
            array![1.0, 1.0, 1.0],
            array![0.0, 1.0, 0.0],
            None,
        )
        .unwrap();
        let report = ds.validate().unwrap();
        assert!(report.flags.iter().any(|f| f.contains("control arm empty")));
    }

    #[test]
    fn non_finite_covariate_is_structural_error() {
        let ds = ObservationalDataset {
            covariates: array![[0.0], [f64::NAN]],
            treatment: array![1.0, 0.0],
            outcome: array![1.0, 0.0],
            feature_names: vec!["x0".into()],
            truth: None,
        };
        assert!(matches!(ds.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn length_mismatch_is_structural_error() {
        let ds = ObservationalDataset {
            covariates: array![[0.0], [1.0]],
            treatment: array![1.0, 0.0, 1.0],
            outcome: array![1.0, 0.0],
            feature_names: vec!["x0".into()],
            truth: None,
        };
        assert!(matches!(ds.validate(), Err(Error::Structural(_))));
    }

    #[test]
    fn constant_column_flagged() {
        let ds = ObservationalDataset::unnamed(
            array![[3.0, 1.0], [3.0, 2.0]],
            array![1.0, 0.0],
            array![1.0, 0.0],
            None,
        )
        .unwrap();
        let report = ds.validate().unwrap();
        assert!(report
            .flags
            .iter()
            .any(|f| f.contains("constant column: x0")));
    }

    #[test]
    fn ground_truth_tau_enforced() {
        let truth = GroundTruth::new(array![0.0, 1.0], array![1.0, 3.0], None);
        assert_eq!(truth.tau, array![1.0, 2.0]);
        let ds = ObservationalDataset::unnamed(
            array![[0.0], [1.0]],
            array![1.0, 0.0],
            array![1.0, 1.0],
            Some(truth),
        )
        .unwrap();
        assert!(ds.validate().is_ok());
    }

    #[test]
    fn subset_preserves_alignment() {
        let ds = small();
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.n(), 2);
        assert_eq!(sub.treatment, array![1.0, 1.0]);
        assert_eq!(sub.covariates.row(0), ds.covariates.row(2));
    }
}
