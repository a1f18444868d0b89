//! Gradient-boosted stumps (depth-1 trees).
//!
//! Regression boosts squared error on residuals; classification runs
//! logistic boosting with Newton leaf values. The raw model output is a
//! margin; the classifier wrapper applies the sigmoid.

use ndarray::{Array1, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Tree};
use crate::error::{Error, Result};
use crate::seed::RngSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostSpec {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for BoostSpec {
    fn default() -> Self {
        BoostSpec {
            n_rounds: 200,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

impl BoostSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config(
                "boosted-stumps: n_rounds must be >= 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(
                "boosted-stumps: learning_rate must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A fitted stump ensemble. `predict_row` returns `init + lr * Σ stump(x)`,
/// which is the prediction for a regressor and the log-odds margin for a
/// classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoostedTrees {
    init: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl BoostedTrees {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let mut score = self.init;
        for t in &self.trees {
            score += self.learning_rate * t.predict_row(x);
        }
        score
    }

    pub fn n_rounds(&self) -> usize {
        self.trees.len()
    }
}

const MIN_HESSIAN: f64 = 1e-6;

pub(super) fn fit_regressor(
    spec: &BoostSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<BoostedTrees> {
    let n = x.nrows();
    let w: Vec<f64> = weights.map(|v| v.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    let w_sum: f64 = w.iter().sum();
    let init = y.iter().zip(&w).map(|(&yi, &wi)| wi * yi).sum::<f64>() / w_sum;

    let mut f: Vec<f64> = vec![init; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(spec.n_rounds);
    let mut residual = vec![0.0; n];
    for round in 0..spec.n_rounds {
        for i in 0..n {
            residual[i] = y[i] - f[i];
        }
        let mut rng = RngSeed(spec.seed).derive(round as u64).rng();
        let stump = fit_tree(x, &residual, &w, &rows, 1, 1, x.ncols(), &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += spec.learning_rate * stump.predict_row(x.row(i));
        }
        trees.push(stump);
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit(
            "boosting produced non-finite predictions".into(),
        ));
    }
    Ok(BoostedTrees {
        init,
        learning_rate: spec.learning_rate,
        trees,
    })
}

pub(super) fn fit_classifier(
    spec: &BoostSpec,
    x: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<BoostedTrees> {
    let n = x.nrows();
    let w: Vec<f64> = weights.map(|v| v.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    let w_sum: f64 = w.iter().sum();
    let p_bar = (labels.iter().zip(&w).map(|(&yi, &wi)| wi * yi).sum::<f64>() / w_sum)
        .clamp(1e-6, 1.0 - 1e-6);
    let init = (p_bar / (1.0 - p_bar)).ln();

    let mut f: Vec<f64> = vec![init; n];
    let rows: Vec<usize> = (0..n).collect();
    let mut trees = Vec::with_capacity(spec.n_rounds);
    // Newton trick: a weighted-mean leaf over targets r/h with weights w*h
    // stores exactly Σ w·r / Σ w·h.
    let mut target = vec![0.0; n];
    let mut wh = vec![0.0; n];
    for round in 0..spec.n_rounds {
        for i in 0..n {
            let p = super::sigmoid(f[i]);
            let h = (p * (1.0 - p)).max(MIN_HESSIAN);
            target[i] = (labels[i] - p) / h;
            wh[i] = w[i] * h;
        }
        let mut rng = RngSeed(spec.seed).derive(round as u64).rng();
        let stump = fit_tree(x, &target, &wh, &rows, 1, 1, x.ncols(), &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += spec.learning_rate * stump.predict_row(x.row(i));
        }
        trees.push(stump);
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("boosting produced non-finite margins".into()));
    }
    Ok(BoostedTrees {
        init,
        learning_rate: spec.learning_rate,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::sigmoid;
    use ndarray::{array, Array2};
    use rand::Rng;

    #[test]
    fn regressor_fits_step_function() {
        let x = array![[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]];
        let y = array![0.0, 0.0, 0.0, 4.0, 4.0, 4.0];
        let m = fit_regressor(&BoostSpec::default(), x.view(), y.view(), None).unwrap();
        for i in 0..6 {
            assert!((m.predict_row(x.row(i)) - y[i]).abs() < 0.05, "row {i}");
        }
    }

    #[test]
    fn classifier_probabilities_track_labels() {
        let mut rng = RngSeed(4).rng();
        let n = 300;
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = ndarray::Array1::<f64>::zeros(n);
        for i in 0..n {
            x[[i, 0]] = rng.gen_range(-2.0..2.0);
            x[[i, 1]] = rng.gen_range(-2.0..2.0);
            y[i] = f64::from(x[[i, 0]] > 0.3);
        }
        let m = fit_classifier(&BoostSpec::default(), x.view(), y.view(), None).unwrap();
        let acc = (0..n)
            .filter(|&i| (sigmoid(m.predict_row(x.row(i))) > 0.5) == (y[i] == 1.0))
            .count() as f64
            / n as f64;
        assert!(acc > 0.95, "accuracy {acc}");
    }

    #[test]
    fn deterministic_across_runs() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = array![0.0, 1.0, 0.0, 1.0];
        let a = fit_classifier(&BoostSpec::default(), x.view(), y.view(), None).unwrap();
        let b = fit_classifier(&BoostSpec::default(), x.view(), y.view(), None).unwrap();
        for i in 0..4 {
            assert_eq!(
                a.predict_row(x.row(i)).to_bits(),
                b.predict_row(x.row(i)).to_bits()
            );
        }
    }
}
