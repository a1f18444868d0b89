//! Shared dense-layer machinery for the MLP learner and the representation
//! networks.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::learners::InitKind;

/// One dense layer, `out x in` weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    pub(crate) fn new(n_in: usize, n_out: usize, init: InitKind, rng: &mut ChaCha8Rng) -> Self {
        let mut w = Array2::<f64>::zeros((n_out, n_in));
        if init == InitKind::Uniform {
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            for v in w.iter_mut() {
                *v = rng.gen_range(-limit..limit);
            }
        }
        Dense {
            w,
            b: Array1::zeros(n_out),
        }
    }

    /// x: batch x in -> batch x out.
    pub(crate) fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    /// Accumulate parameter gradients and return the input gradient.
    pub(crate) fn backward(
        &self,
        input: &Array2<f64>,
        grad_out: &Array2<f64>,
        grad_w: &mut Array2<f64>,
        grad_b: &mut Array1<f64>,
    ) -> Array2<f64> {
        *grad_w += &grad_out.t().dot(input);
        *grad_b += &grad_out.sum_axis(Axis(0));
        grad_out.dot(&self.w)
    }

    pub(crate) fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }

    pub(crate) fn push_params(&self, out: &mut Vec<f64>) {
        out.extend(self.w.iter());
        out.extend(self.b.iter());
    }

    pub(crate) fn load_params(&mut self, v: &[f64], pos: &mut usize) {
        for p in self.w.iter_mut() {
            *p = v[*pos];
            *pos += 1;
        }
        for p in self.b.iter_mut() {
            *p = v[*pos];
            *pos += 1;
        }
    }

    pub(crate) fn step(&mut self, grad_w: &Array2<f64>, grad_b: &Array1<f64>, lr: f64) {
        self.w.scaled_add(-lr, grad_w);
        self.b.scaled_add(-lr, grad_b);
    }
}

/// Per-feature affine input scaling fit on the training matrix, so
/// fixed-learning-rate training is stable on raw-scale features.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct Standardizer {
    pub means: Array1<f64>,
    pub scales: Array1<f64>,
}

impl Standardizer {
    pub(crate) fn identity(d: usize) -> Self {
        Standardizer { means: Array1::zeros(d), scales: Array1::ones(d) }
    }

    pub(crate) fn fit(x: ndarray::ArrayView2<f64>) -> Self {
        let n = x.nrows() as f64;
        let means = x.mean_axis(Axis(0)).expect("non-empty matrix");
        let scales = Array1::from_iter((0..x.ncols()).map(|j| {
            let var = x.column(j).iter().map(|v| (v - means[j]) * (v - means[j])).sum::<f64>() / n;
            if var > 1e-24 {
                var.sqrt()
            } else {
                1.0
            }
        }));
        Standardizer { means, scales }
    }

    pub(crate) fn transform(&self, x: ndarray::ArrayView2<f64>) -> Array2<f64> {
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for j in 0..row.len() {
                row[j] = (row[j] - self.means[j]) / self.scales[j];
            }
        }
        out
    }
}

pub(crate) fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp() - 1.0
    }
}

pub(crate) fn elu_deriv(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}
