//! Feed-forward network with hand-written backprop and a finite-difference
//! gradient check. The balanced-representation estimators reuse the layer
//! machinery here, so the check doubles as their quality gate.
//!
//! Hidden activation is ELU (smooth except at exactly zero pre-activation);
//! the output is linear, with the sigmoid applied by callers that trained a
//! classifier. Training is plain mini-batch gradient descent with a fixed
//! learning rate and seed-determined batch order.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{elu, elu_deriv, Dense};
use crate::seed::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// Xavier-uniform weights, zero biases.
    Uniform,
    /// All parameters zero (diagnostic).
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSpec {
    /// Hidden-layer widths; empty means a bare linear map.
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub init: InitKind,
    pub seed: u64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        MlpSpec {
            hidden: vec![32],
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            l2: 0.0,
            init: InitKind::Uniform,
            seed: 0,
        }
    }
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("mlp: learning_rate must be > 0".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("mlp: epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("mlp: batch_size must be >= 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::Config("mlp: l2 must be >= 0".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("mlp: hidden widths must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mutable parameter-gradient buffers: one weight and one bias array per
/// layer.
type GradBuffers<'a> = (&'a mut Vec<Array2<f64>>, &'a mut Vec<Array1<f64>>);

/// A fitted feed-forward network. `predict_row` returns the raw (linear)
/// output; classifier callers apply the sigmoid. Inputs are standardized
/// with the scaling fit on the training matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpNet {
    layers: Vec<Dense>,
    scaler: crate::nn::Standardizer,
    pub trained_as_classifier: bool,
}

impl MlpNet {
    pub(crate) fn init(
        n_in: usize,
        hidden: &[usize],
        init: InitKind,
        rng: &mut ChaCha8Rng,
        classifier: bool,
    ) -> Self {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut width = n_in;
        for &h in hidden {
            layers.push(Dense::new(width, h, init, rng));
            width = h;
        }
        layers.push(Dense::new(width, 1, init, rng));
        MlpNet {
            layers,
            scaler: crate::nn::Standardizer::identity(n_in),
            trained_as_classifier: classifier,
        }
    }

    /// Raw outputs for an already-standardized batch.
    fn forward_std(&self, xs: &Array2<f64>) -> Array1<f64> {
        let mut a = xs.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if l + 1 < self.layers.len() {
                a.mapv_inplace(elu);
            }
        }
        a.index_axis(Axis(1), 0).to_owned()
    }

    pub fn predict_row(&self, x: ArrayView1<f64>) -> f64 {
        let batch = self.scaler.transform(x.insert_axis(Axis(0)));
        self.forward_std(&batch)[0]
    }

    pub fn predict(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.forward_std(&self.scaler.transform(x))
    }

    pub(crate) fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub(crate) fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            l.push_params(&mut out);
        }
        out
    }

    pub(crate) fn set_params(&mut self, v: &[f64]) {
        let mut pos = 0;
        for l in &mut self.layers {
            l.load_params(v, &mut pos);
        }
        debug_assert_eq!(pos, v.len());
    }

    /// Mean loss over the batch plus L2 penalty; `grad` out-params receive
    /// parameter gradients when requested.
    fn loss_and_grad(
        &self,
        x: &Array2<f64>,
        y: ArrayView1<f64>,
        w: Option<&[f64]>,
        l2: f64,
        classifier: bool,
        grads: Option<GradBuffers<'_>>,
    ) -> f64 {
        let batch = x.nrows();
        let n_layers = self.layers.len();
        // Forward pass, caching inputs and pre-activations per layer.
        let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        let mut a = x.clone();
        let mut pre: Vec<Array2<f64>> = Vec::with_capacity(n_layers);
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(a.clone());
            let z = layer.forward(&a);
            pre.push(z.clone());
            a = if l + 1 < n_layers { z.mapv(elu) } else { z };
        }
        let out = a.index_axis(Axis(1), 0);

        let w_sum: f64 = w.map(|w| w.iter().sum()).unwrap_or(batch as f64);
        let weight = |i: usize| w.map_or(1.0, |w| w[i]);
        let mut loss = 0.0;
        let mut dout = Array2::<f64>::zeros((batch, 1));
        for i in 0..batch {
            let wi = weight(i) / w_sum;
            if classifier {
                let z = out[i];
                let ll = if z >= 0.0 {
                    (1.0 + (-z).exp()).ln() + (1.0 - y[i]) * z
                } else {
                    (1.0 + z.exp()).ln() - y[i] * z
                };
                loss += wi * ll;
                dout[[i, 0]] = wi * (super::sigmoid(z) - y[i]);
            } else {
                let e = out[i] - y[i];
                loss += wi * e * e;
                dout[[i, 0]] = wi * 2.0 * e;
            }
        }
        for layer in &self.layers {
            loss += 0.5 * l2 * layer.w.iter().map(|v| v * v).sum::<f64>();
        }

        if let Some((grad_w, grad_b)) = grads {
            let mut grad = dout;
            for l in (0..n_layers).rev() {
                let gin =
                    self.layers[l].backward(&inputs[l], &grad, &mut grad_w[l], &mut grad_b[l]);
                grad_w[l].scaled_add(l2, &self.layers[l].w);
                if l > 0 {
                    grad = gin * pre[l - 1].mapv(elu_deriv);
                }
            }
        }
        loss
    }
}

pub(super) fn fit(
    spec: &MlpSpec,
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    weights: Option<&Array1<f64>>,
    classifier: bool,
) -> Result<MlpNet> {
    let n = x.nrows();
    let mut rng = RngSeed(spec.seed).rng();
    let mut net = MlpNet::init(x.ncols(), &spec.hidden, spec.init, &mut rng, classifier);
    net.scaler = crate::nn::Standardizer::fit(x);
    let x = net.scaler.transform(x);
    let w_all: Option<Vec<f64>> = weights.map(|w| w.to_vec());

    let mut order: Vec<usize> = (0..n).collect();
    let mut grad_w: Vec<Array2<f64>> = net
        .layers
        .iter()
        .map(|l| Array2::zeros(l.w.dim()))
        .collect();
    let mut grad_b: Vec<Array1<f64>> = net
        .layers
        .iter()
        .map(|l| Array1::zeros(l.b.len()))
        .collect();
    for epoch in 0..spec.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(spec.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb = Array1::from_iter(chunk.iter().map(|&i| y[i]));
            let wb: Option<Vec<f64>> = w_all
                .as_ref()
                .map(|w| chunk.iter().map(|&i| w[i]).collect());
            for g in grad_w.iter_mut() {
                g.fill(0.0);
            }
            for g in grad_b.iter_mut() {
                g.fill(0.0);
            }
            let loss = net.loss_and_grad(
                &xb,
                yb.view(),
                wb.as_deref(),
                spec.l2,
                classifier,
                Some((&mut grad_w, &mut grad_b)),
            );
            if !loss.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "mini-batch loss is non-finite".into(),
                });
            }
            for (l, layer) in net.layers.iter_mut().enumerate() {
                layer.step(&grad_w[l], &grad_b[l], spec.learning_rate);
            }
        }
    }
    Ok(net)
}

/// Compare analytic gradients of the mean-squared-error objective against
/// central finite differences (step 1e-5) on every parameter. Returns the
/// maximum scaled error `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn gradient_check(spec: &MlpSpec, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<f64> {
    spec.validate()?;
    if x.nrows() == 0 || x.nrows() != y.len() {
        return Err(Error::Fit(
            "gradient check needs matching, non-empty inputs".into(),
        ));
    }
    let mut rng = RngSeed(spec.seed).rng();
    let mut net = MlpNet::init(x.ncols(), &spec.hidden, spec.init, &mut rng, false);
    let xb = x.to_owned();

    let mut grad_w: Vec<Array2<f64>> = net
        .layers
        .iter()
        .map(|l| Array2::zeros(l.w.dim()))
        .collect();
    let mut grad_b: Vec<Array1<f64>> = net
        .layers
        .iter()
        .map(|l| Array1::zeros(l.b.len()))
        .collect();
    net.loss_and_grad(
        &xb,
        y,
        None,
        spec.l2,
        false,
        Some((&mut grad_w, &mut grad_b)),
    );
    let mut analytic: Vec<f64> = Vec::with_capacity(net.n_params());
    for l in 0..net.layers.len() {
        analytic.extend(grad_w[l].iter());
        analytic.extend(grad_b[l].iter());
    }

    let params = net.get_params();
    let h = 1e-5;
    let mut max_err: f64 = 0.0;
    let mut perturbed = params.clone();
    for k in 0..params.len() {
        perturbed[k] = params[k] + h;
        net.set_params(&perturbed);
        let up = net.loss_and_grad(&xb, y, None, spec.l2, false, None);
        perturbed[k] = params[k] - h;
        net.set_params(&perturbed);
        let down = net.loss_and_grad(&xb, y, None, spec.l2, false, None);
        perturbed[k] = params[k];
        let numeric = (up - down) / (2.0 * h);
        let denom = 1.0f64.max(analytic[k].abs()).max(numeric.abs());
        max_err = max_err.max((analytic[k] - numeric).abs() / denom);
    }
    net.set_params(&params);
    Ok(max_err)
}

/// Analytic output-layer gradient of the MSE objective at initialization;
/// exposed for the zero-initialization diagnostic.
pub fn output_layer_gradient(spec: &MlpSpec, x: ArrayView2<f64>, y: ArrayView1<f64>) -> Vec<f64> {
    let mut rng = RngSeed(spec.seed).rng();
    let net = MlpNet::init(x.ncols(), &spec.hidden, spec.init, &mut rng, false);
    let mut grad_w: Vec<Array2<f64>> = net
        .layers
        .iter()
        .map(|l| Array2::zeros(l.w.dim()))
        .collect();
    let mut grad_b: Vec<Array1<f64>> = net
        .layers
        .iter()
        .map(|l| Array1::zeros(l.b.len()))
        .collect();
    net.loss_and_grad(
        &x.to_owned(),
        y,
        None,
        spec.l2,
        false,
        Some((&mut grad_w, &mut grad_b)),
    );
    let last = net.layers.len() - 1;
    let mut out: Vec<f64> = grad_w[last].iter().copied().collect();
    out.extend(grad_b[last].iter());
    out
}
