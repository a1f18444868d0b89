//! Regularized linear regression: exact normal-equation solve when the
//! penalty has no L1 part, coordinate descent otherwise.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_spd;

/// Objective: (1/(2W)) Σ wᵢ (yᵢ - b₀ - xᵢ·β)² + α·(r·‖β‖₁ + (1-r)/2·‖β‖²)
/// with W = Σ wᵢ, mixing r = `l1_ratio`, and an unpenalized intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearSpec {
    /// Regularization strength α ≥ 0. Zero gives ordinary least squares.
    pub alpha: f64,
    /// Elastic-net mixing in [0, 1]: 0 = pure L2, 1 = pure L1. The default
    /// 0.5 is a convention, not a calibrated value.
    pub l1_ratio: f64,
    /// Standardize features to zero mean / unit variance before fitting.
    /// Coefficients are reported on the raw scale either way.
    pub standardize: bool,
    /// Coordinate-descent sweep cap (only used when α·l1_ratio > 0).
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for LinearSpec {
    fn default() -> Self {
        LinearSpec {
            alpha: 0.0,
            l1_ratio: 0.5,
            standardize: true,
            max_iter: 1000,
            seed: 0,
        }
    }
}

impl LinearSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::Config("linear: alpha must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::Config("linear: l1_ratio must be in [0,1]".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("linear: max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Fitted linear model with raw-scale coefficients.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearModel {
    pub coef: Array1<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        self.intercept + self.coef.dot(&x)
    }
}

const CD_TOL: f64 = 1e-10;

pub(super) fn fit(
    spec: &LinearSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
) -> Result<LinearModel> {
    let n = x.nrows();
    let d = x.ncols();
    let w: Array1<f64> = weights.cloned().unwrap_or_else(|| Array1::ones(n));
    let w_sum = w.sum();

    // Weighted centering (and optional scaling); the intercept is recovered
    // afterwards, so it is never penalized.
    let mut mean = Array1::<f64>::zeros(d);
    for i in 0..n {
        for j in 0..d {
            mean[j] += w[i] * x[[i, j]];
        }
    }
    mean /= w_sum;
    let y_mean = y
        .iter()
        .zip(w.iter())
        .map(|(&yi, &wi)| wi * yi)
        .sum::<f64>()
        / w_sum;

    let mut scale = Array1::<f64>::ones(d);
    if spec.standardize {
        for j in 0..d {
            let mut var = 0.0;
            for i in 0..n {
                let c = x[[i, j]] - mean[j];
                var += w[i] * c * c;
            }
            var /= w_sum;
            scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
        }
    }

    // Centered/scaled design, kept dense; learner inputs are modest.
    let mut xs = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            xs[[i, j]] = (x[[i, j]] - mean[j]) / scale[j];
        }
    }
    let yc: Array1<f64> = Array1::from_iter(y.iter().map(|&yi| yi - y_mean));

    let l1 = spec.alpha * spec.l1_ratio;
    let l2 = spec.alpha * (1.0 - spec.l1_ratio);

    let beta_std = if l1 == 0.0 {
        solve_l2(&xs, &yc, &w, w_sum, l2)?
    } else {
        coordinate_descent(&xs, &yc, &w, w_sum, l1, l2, spec.max_iter)
    };

    // Unfold to raw scale.
    let coef = Array1::from_iter((0..d).map(|j| beta_std[j] / scale[j]));
    let intercept = y_mean - coef.dot(&mean);
    if coef.iter().any(|v| !v.is_finite()) || !intercept.is_finite() {
        return Err(Error::Fit(
            "linear fit produced non-finite coefficients".into(),
        ));
    }
    Ok(LinearModel { coef, intercept })
}

/// Closed form for the L2-only objective: (XᵀWX/W + l2·I) β = XᵀW y / W.
fn solve_l2(
    xs: &Array2<f64>,
    yc: &Array1<f64>,
    w: &Array1<f64>,
    w_sum: f64,
    l2: f64,
) -> Result<Array1<f64>> {
    let d = xs.ncols();
    if d == 0 {
        return Ok(Array1::zeros(0));
    }
    let mut gram = Array2::<f64>::zeros((d, d));
    let mut rhs = Array1::<f64>::zeros(d);
    for i in 0..xs.nrows() {
        let wi = w[i];
        for j in 0..d {
            let xij = xs[[i, j]];
            rhs[j] += wi * xij * yc[i];
            for k in j..d {
                gram[[j, k]] += wi * xij * xs[[i, k]];
            }
        }
    }
    for j in 0..d {
        for k in 0..j {
            gram[[j, k]] = gram[[k, j]];
        }
    }
    gram /= w_sum;
    rhs /= w_sum;
    for j in 0..d {
        gram[[j, j]] += l2;
    }
    match solve_spd(&gram, &rhs) {
        Ok(beta) => Ok(beta),
        Err(_) => {
            // Singular unpenalized system; retry with a tiny ridge so exactly
            // collinear inputs still fit.
            for j in 0..d {
                gram[[j, j]] += 1e-10;
            }
            solve_spd(&gram, &rhs)
        }
    }
}

fn coordinate_descent(
    xs: &Array2<f64>,
    yc: &Array1<f64>,
    w: &Array1<f64>,
    w_sum: f64,
    l1: f64,
    l2: f64,
    max_iter: usize,
) -> Array1<f64> {
    let n = xs.nrows();
    let d = xs.ncols();
    let mut beta = Array1::<f64>::zeros(d);
    let mut resid = yc.clone();
    // Per-feature curvature: (1/W) Σ wᵢ xᵢⱼ².
    let nu: Vec<f64> = (0..d)
        .map(|j| (0..n).map(|i| w[i] * xs[[i, j]] * xs[[i, j]]).sum::<f64>() / w_sum)
        .collect();
    for _ in 0..max_iter {
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            if nu[j] == 0.0 {
                continue;
            }
            let old = beta[j];
            let mut rho = 0.0;
            for i in 0..n {
                rho += w[i] * xs[[i, j]] * (resid[i] + xs[[i, j]] * old);
            }
            rho /= w_sum;
            let new = soft_threshold(rho, l1) / (nu[j] + l2);
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    resid[i] -= delta * xs[[i, j]];
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < CD_TOL {
            break;
        }
    }
    beta
}

fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}
