//! Logistic regression trained by full-batch gradient descent with a fixed
//! iteration cap; convergence declared when the loss delta drops below 1e-8.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticSpec {
    /// L2 strength on the coefficients (intercept unpenalized).
    pub l2: f64,
    /// Initial gradient-descent step; halved whenever a step increases loss.
    pub learning_rate: f64,
    pub max_iter: usize,
    pub standardize: bool,
    pub seed: u64,
}

impl Default for LogisticSpec {
    fn default() -> Self {
        LogisticSpec {
            l2: 0.0,
            learning_rate: 1.0,
            max_iter: 500,
            standardize: true,
            seed: 0,
        }
    }
}

impl LogisticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Config("logistic: l2 must be >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("logistic: learning_rate must be > 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("logistic: max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fitted logistic model with raw-scale coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticModel {
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl LogisticModel {
    pub fn predict_proba_row(&self, x: ArrayView1<f64>) -> f64 {
        sigmoid(self.intercept + self.coef.dot(&x))
    }
}

const LOSS_TOL: f64 = 1e-8;

pub(super) fn fit(
    spec: &LogisticSpec,
    x: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<LogisticModel> {
    let n = x.nrows();
    let d = x.ncols();
    let w: Array1<f64> = weights.cloned().unwrap_or_else(|| Array1::ones(n));
    let w_sum = w.sum();

    let mut mean = Array1::<f64>::zeros(d);
    let mut scale = Array1::<f64>::ones(d);
    if spec.standardize {
        for j in 0..d {
            let mut m = 0.0;
            for i in 0..n {
                m += w[i] * x[[i, j]];
            }
            m /= w_sum;
            let mut var = 0.0;
            for i in 0..n {
                let c = x[[i, j]] - m;
                var += w[i] * c * c;
            }
            var /= w_sum;
            mean[j] = m;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }
    let mut xs = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            xs[[i, j]] = (x[[i, j]] - mean[j]) / scale[j];
        }
    }

    let mut beta = Array1::<f64>::zeros(d);
    let mut b0 = 0.0f64;
    let mut lr = spec.learning_rate;
    let loss = |beta: &Array1<f64>, b0: f64| -> f64 {
        let mut total = 0.0;
        for i in 0..n {
            let z = b0 + xs.row(i).dot(beta);
            // log(1 + e^-|z|) + max(0, -yz) form keeps this stable.
            let ll = if z >= 0.0 {
                (1.0 + (-z).exp()).ln() + (1.0 - labels[i]) * z
            } else {
                (1.0 + z.exp()).ln() - labels[i] * z
            };
            total += w[i] * ll;
        }
        total / w_sum + 0.5 * spec.l2 * beta.dot(beta)
    };

    let mut prev_loss = loss(&beta, b0);
    for _ in 0..spec.max_iter {
        let mut grad = Array1::<f64>::zeros(d);
        let mut grad0 = 0.0;
        for i in 0..n {
            let p = sigmoid(b0 + xs.row(i).dot(&beta));
            let g = w[i] * (p - labels[i]);
            grad0 += g;
            for j in 0..d {
                grad[j] += g * xs[[i, j]];
            }
        }
        grad /= w_sum;
        grad0 /= w_sum;
        for j in 0..d {
            grad[j] += spec.l2 * beta[j];
        }

        let mut stepped = false;
        for _ in 0..30 {
            let cand_beta = &beta - &(lr * &grad);
            let cand_b0 = b0 - lr * grad0;
            let cand_loss = loss(&cand_beta, cand_b0);
            if cand_loss <= prev_loss {
                beta = cand_beta;
                b0 = cand_b0;
                let delta = prev_loss - cand_loss;
                prev_loss = cand_loss;
                stepped = true;
                if delta < LOSS_TOL {
                    lr = -1.0; // sentinel: converged
                }
                break;
            }
            lr *= 0.5;
        }
        if !stepped || lr < 0.0 {
            break;
        }
    }
    if !prev_loss.is_finite() {
        return Err(Error::Fit(
            "logistic training loss became non-finite".into(),
        ));
    }
    // Unfold to raw scale.
    let coef = Array1::from_iter((0..d).map(|j| beta[j] / scale[j]));
    let intercept = b0 - coef.dot(&mean);
    Ok(LogisticModel { coef, intercept })
}
