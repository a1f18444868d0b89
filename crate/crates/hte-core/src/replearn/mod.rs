//! Balanced-representation neural estimators: a shared representation stack
//! feeding one outcome head per arm, with an optional kernel balance penalty
//! between arm representations and an optional propensity head with a
//! targeted perturbation scalar.
//!
//! With `ipm_weight = 0` and the propensity head off this is the plain
//! two-head network; a positive `ipm_weight` adds the balance penalty; the
//! propensity head plus targeted term gives the augmented-weighting
//! estimator. Training is plain mini-batch gradient descent with a fixed
//! learning rate; batch order comes from the seed, so two identical runs
//! produce bit-identical parameters. The layer machinery is shared with the
//! base MLP learner, whose finite-difference gradient check (plus
//! [`repnet_gradient_check`]) gates this module's training path.

mod mmd;

pub use mmd::{mmd, Bandwidth, IpmValue, KernelSpec};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::learners::sigmoid;
use crate::nn::{elu, elu_deriv, Dense};
use crate::seed::RngSeed;
use mmd::{mmd_value, mmd_with_grad, ResolvedKernel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum DragonConfig {
    #[default]
    Off,
    On {
        /// Propensity cross-entropy weight, > 0.
        alpha: f64,
        /// Targeted-perturbation weight, >= 0.
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepNetConfig {
    /// Representation widths; every layer is activated.
    pub rep_layers: Vec<usize>,
    /// Hidden widths of each outcome head (a final linear unit is appended).
    pub head_layers: Vec<usize>,
    /// Balance penalty weight λ >= 0; zero recovers the plain two-head net.
    pub ipm_weight: f64,
    pub kernel: KernelSpec,
    pub dragon: DragonConfig,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RepNetConfig {
    fn default() -> Self {
        RepNetConfig {
            rep_layers: vec![32, 16],
            head_layers: vec![8],
            ipm_weight: 0.0,
            kernel: KernelSpec::default(),
            dragon: DragonConfig::Off,
            epochs: 300,
            learning_rate: 0.01,
            batch_size: 128,
            seed: 0,
        }
    }
}

impl RepNetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ipm_weight.is_finite() && self.ipm_weight >= 0.0) {
            return Err(Error::Config("repnet: ipm_weight must be >= 0".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config("repnet: learning_rate must be > 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "repnet: epochs and batch_size must be >= 1".into(),
            ));
        }
        if self
            .rep_layers
            .iter()
            .chain(self.head_layers.iter())
            .any(|&w| w == 0)
        {
            return Err(Error::Config("repnet: layer widths must be >= 1".into()));
        }
        if let DragonConfig::On { alpha, beta } = self.dragon {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(Error::Config("repnet: dragon alpha must be > 0".into()));
            }
            if !(beta.is_finite() && beta >= 0.0) {
                return Err(Error::Config("repnet: dragon beta must be >= 0".into()));
            }
        }
        self.kernel.validate()
    }
}

/// Loss components of one training step or epoch.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossParts {
    pub factual: f64,
    /// Raw batch MMD² (before weighting by λ).
    pub mmd: f64,
    pub propensity: f64,
    pub targeted: f64,
}

impl LossParts {
    fn zero() -> Self {
        LossParts {
            factual: 0.0,
            mmd: 0.0,
            propensity: 0.0,
            targeted: 0.0,
        }
    }

    pub fn total(&self, config: &RepNetConfig) -> f64 {
        let (alpha, beta) = match config.dragon {
            DragonConfig::Off => (0.0, 0.0),
            DragonConfig::On { alpha, beta } => (alpha, beta),
        };
        self.factual + config.ipm_weight * self.mmd + alpha * self.propensity + beta * self.targeted
    }
}

#[derive(Debug, Clone)]
pub struct TrainTrace {
    /// Per-epoch averages of the loss components.
    pub epochs: Vec<LossParts>,
    /// Total loss per optimization step.
    pub step_total: Vec<f64>,
    /// Factual component per optimization step.
    pub step_factual: Vec<f64>,
}

/// Fitted representation network.
#[derive(Debug, Clone)]
pub struct RepNetModel {
    rep: Vec<Dense>,
    head0: Vec<Dense>,
    head1: Vec<Dense>,
    prop: Option<Dense>,
    epsilon: f64,
    scaler: crate::nn::Standardizer,
    pub config: RepNetConfig,
    pub trace: TrainTrace,
}

struct StackCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    out: Array2<f64>,
}

fn stack_forward(layers: &[Dense], x: &Array2<f64>, activate_last: bool) -> StackCache {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre = Vec::with_capacity(layers.len());
    let mut a = x.clone();
    for (i, layer) in layers.iter().enumerate() {
        inputs.push(a.clone());
        let z = layer.forward(&a);
        pre.push(z.clone());
        let activated = i + 1 < layers.len() || activate_last;
        a = if activated { z.mapv(elu) } else { z };
    }
    StackCache {
        inputs,
        pre,
        out: a,
    }
}

fn stack_backward(
    layers: &[Dense],
    cache: &StackCache,
    mut grad: Array2<f64>,
    activate_last: bool,
    grad_w: &mut [Array2<f64>],
    grad_b: &mut [Array1<f64>],
) -> Array2<f64> {
    for i in (0..layers.len()).rev() {
        let activated = i + 1 < layers.len() || activate_last;
        if activated {
            grad = grad * cache.pre[i].mapv(elu_deriv);
        }
        grad = layers[i].backward(&cache.inputs[i], &grad, &mut grad_w[i], &mut grad_b[i]);
    }
    grad
}

struct Grads {
    rep_w: Vec<Array2<f64>>,
    rep_b: Vec<Array1<f64>>,
    h0_w: Vec<Array2<f64>>,
    h0_b: Vec<Array1<f64>>,
    h1_w: Vec<Array2<f64>>,
    h1_b: Vec<Array1<f64>>,
    prop_w: Option<Array2<f64>>,
    prop_b: Option<Array1<f64>>,
    epsilon: f64,
}

impl Grads {
    fn zeros_like(net: &RepNetModel) -> Self {
        let zw = |ls: &[Dense]| {
            ls.iter()
                .map(|l| Array2::zeros(l.w.dim()))
                .collect::<Vec<_>>()
        };
        let zb = |ls: &[Dense]| {
            ls.iter()
                .map(|l| Array1::zeros(l.b.len()))
                .collect::<Vec<_>>()
        };
        Grads {
            rep_w: zw(&net.rep),
            rep_b: zb(&net.rep),
            h0_w: zw(&net.head0),
            h0_b: zb(&net.head0),
            h1_w: zw(&net.head1),
            h1_b: zb(&net.head1),
            prop_w: net.prop.as_ref().map(|l| Array2::zeros(l.w.dim())),
            prop_b: net.prop.as_ref().map(|l| Array1::zeros(l.b.len())),
            epsilon: 0.0,
        }
    }
}

const PROP_CLAMP: f64 = 1e-3;

impl RepNetModel {
    fn init(d: usize, config: &RepNetConfig) -> Self {
        let mut rng = RngSeed(config.seed).rng();
        let init = crate::learners::InitKind::Uniform;
        let mut rep = Vec::new();
        let mut width = d;
        for &h in &config.rep_layers {
            rep.push(Dense::new(width, h, init, &mut rng));
            width = h;
        }
        let make_head = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut layers = Vec::new();
            let mut w = width;
            for &h in &config.head_layers {
                layers.push(Dense::new(w, h, init, rng));
                w = h;
            }
            layers.push(Dense::new(w, 1, init, rng));
            layers
        };
        let head0 = make_head(&mut rng);
        let head1 = make_head(&mut rng);
        let prop = match config.dragon {
            DragonConfig::On { .. } => Some(Dense::new(width, 1, init, &mut rng)),
            DragonConfig::Off => None,
        };
        RepNetModel {
            rep,
            head0,
            head1,
            prop,
            epsilon: 0.0,
            scaler: crate::nn::Standardizer::identity(d),
            config: config.clone(),
            trace: TrainTrace {
                epochs: Vec::new(),
                step_total: Vec::new(),
                step_factual: Vec::new(),
            },
        }
    }

    /// Representation φ(x) for a batch of raw-scale covariates.
    pub fn representation(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.rep_forward(&self.scaler.transform(x))
    }

    /// φ over an already-standardized batch (training-side path).
    fn rep_forward(&self, xs: &Array2<f64>) -> Array2<f64> {
        stack_forward(&self.rep, xs, true).out
    }

    pub fn predict_y_row(&self, x: ArrayView1<f64>, treated: bool) -> f64 {
        let rep = self.representation(x.insert_axis(Axis(0)));
        let head = if treated { &self.head1 } else { &self.head0 };
        stack_forward(head, &rep, false).out[[0, 0]]
    }

    pub fn predict_tau_row(&self, x: ArrayView1<f64>) -> f64 {
        let rep = self.representation(x.insert_axis(Axis(0)));
        let y1 = stack_forward(&self.head1, &rep, false).out[[0, 0]];
        let y0 = stack_forward(&self.head0, &rep, false).out[[0, 0]];
        y1 - y0
    }

    pub fn predict_tau(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let rep = self.representation(x);
        let y1 = stack_forward(&self.head1, &rep, false).out;
        let y0 = stack_forward(&self.head0, &rep, false).out;
        Array1::from_iter((0..x.nrows()).map(|i| y1[[i, 0]] - y0[[i, 0]]))
    }

    /// Propensity-head probabilities; None when the head is off.
    pub fn predict_propensity(&self, x: ArrayView2<f64>) -> Option<Array1<f64>> {
        let prop = self.prop.as_ref()?;
        let rep = self.representation(x);
        let s = prop.forward(&rep);
        Some(Array1::from_iter(
            (0..x.nrows()).map(|i| sigmoid(s[[i, 0]])),
        ))
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn n_params(&self) -> usize {
        let stack = |ls: &[Dense]| ls.iter().map(Dense::n_params).sum::<usize>();
        stack(&self.rep)
            + stack(&self.head0)
            + stack(&self.head1)
            + self.prop.as_ref().map_or(0, Dense::n_params)
            + 1
    }

    fn get_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in self
            .rep
            .iter()
            .chain(&self.head0)
            .chain(&self.head1)
            .chain(self.prop.iter())
        {
            l.push_params(&mut out);
        }
        out.push(self.epsilon);
        out
    }

    fn set_params(&mut self, v: &[f64]) {
        let mut pos = 0;
        for l in self
            .rep
            .iter_mut()
            .chain(self.head0.iter_mut())
            .chain(self.head1.iter_mut())
            .chain(self.prop.iter_mut())
        {
            l.load_params(v, &mut pos);
        }
        self.epsilon = v[pos];
        debug_assert_eq!(pos + 1, v.len());
    }

    /// Forward the full loss on one batch; fills `grads` when given.
    /// `kernel` carries the already-resolved bandwidth so the penalty is
    /// differentiated with the bandwidth held constant.
    fn batch_pass(
        &self,
        x: &Array2<f64>,
        t: &[f64],
        y: &[f64],
        w: &[f64],
        kernel: Option<ResolvedKernel>,
        grads: Option<&mut Grads>,
    ) -> LossParts {
        let batch = x.nrows();
        let bf = batch as f64;
        let (alpha, beta) = match self.config.dragon {
            DragonConfig::Off => (0.0, 0.0),
            DragonConfig::On { alpha, beta } => (alpha, beta),
        };

        let rep_cache = stack_forward(&self.rep, x, true);
        let r = rep_cache.out.ncols();
        let idx0: Vec<usize> = (0..batch).filter(|&i| t[i] == 0.0).collect();
        let idx1: Vec<usize> = (0..batch).filter(|&i| t[i] == 1.0).collect();

        let sub_rep = |idx: &[usize]| rep_cache.out.select(Axis(0), idx);
        let rep0 = sub_rep(&idx0);
        let rep1 = sub_rep(&idx1);
        let cache0 = stack_forward(&self.head0, &rep0, false);
        let cache1 = stack_forward(&self.head1, &rep1, false);

        // Factual predictions per unit.
        let mut q = vec![0.0f64; batch];
        for (pos, &i) in idx0.iter().enumerate() {
            q[i] = cache0.out[[pos, 0]];
        }
        for (pos, &i) in idx1.iter().enumerate() {
            q[i] = cache1.out[[pos, 0]];
        }

        let mut parts = LossParts::zero();
        for i in 0..batch {
            let e = q[i] - y[i];
            parts.factual += w[i] * e * e / bf;
        }

        // Balance penalty between arm representations.
        let mut mmd_grads: Option<(Array2<f64>, Array2<f64>)> = None;
        if let Some(k) = kernel {
            if !idx0.is_empty() && !idx1.is_empty() {
                if grads.is_some() && self.config.ipm_weight > 0.0 {
                    let (v, g1, g0) = mmd_with_grad(rep1.view(), rep0.view(), &k);
                    parts.mmd = v;
                    mmd_grads = Some((g1, g0));
                } else {
                    parts.mmd = mmd_value(rep1.view(), rep0.view(), &k);
                }
            }
        }

        // Propensity head and targeted perturbation.
        let mut prop_cache: Option<Array2<f64>> = None;
        let mut g_prob = vec![0.0f64; batch];
        let mut w_t = vec![0.0f64; batch];
        let mut y_tilde = vec![0.0f64; batch];
        if let Some(prop) = &self.prop {
            let s = prop.forward(&rep_cache.out);
            for i in 0..batch {
                let si = s[[i, 0]];
                let p = sigmoid(si);
                let ll = if si >= 0.0 {
                    (1.0 + (-si).exp()).ln() + (1.0 - t[i]) * si
                } else {
                    (1.0 + si.exp()).ln() - t[i] * si
                };
                parts.propensity += ll / bf;
                let g = p.clamp(PROP_CLAMP, 1.0 - PROP_CLAMP);
                g_prob[i] = g;
                w_t[i] = t[i] / g - (1.0 - t[i]) / (1.0 - g);
                y_tilde[i] = q[i] + self.epsilon * w_t[i];
                let e = y[i] - y_tilde[i];
                parts.targeted += e * e / bf;
            }
            prop_cache = Some(s);
        }

        let Some(grads) = grads else {
            return parts;
        };

        // dL/dq per unit: factual + targeted contributions.
        let mut dq = vec![0.0f64; batch];
        for i in 0..batch {
            dq[i] = 2.0 * w[i] * (q[i] - y[i]) / bf;
        }
        if self.prop.is_some() && beta > 0.0 {
            for i in 0..batch {
                let e = y[i] - y_tilde[i];
                dq[i] += beta * (-2.0) * e / bf;
                grads.epsilon += beta * (-2.0) * e * w_t[i] / bf;
            }
        }

        let mut drep = Array2::<f64>::zeros((batch, r));
        // Arm heads.
        for (head, cache, idx, gw, gb) in [
            (
                &self.head0,
                &cache0,
                &idx0,
                &mut grads.h0_w,
                &mut grads.h0_b,
            ),
            (
                &self.head1,
                &cache1,
                &idx1,
                &mut grads.h1_w,
                &mut grads.h1_b,
            ),
        ] {
            if idx.is_empty() {
                continue;
            }
            let mut dout = Array2::<f64>::zeros((idx.len(), 1));
            for (pos, &i) in idx.iter().enumerate() {
                dout[[pos, 0]] = dq[i];
            }
            let din = stack_backward(head, cache, dout, false, gw, gb);
            for (pos, &i) in idx.iter().enumerate() {
                for c in 0..r {
                    drep[[i, c]] += din[[pos, c]];
                }
            }
        }

        // Balance penalty gradient into the representation rows.
        if let Some((g1, g0)) = mmd_grads {
            let lambda = self.config.ipm_weight;
            for (pos, &i) in idx1.iter().enumerate() {
                for c in 0..r {
                    drep[[i, c]] += lambda * g1[[pos, c]];
                }
            }
            for (pos, &i) in idx0.iter().enumerate() {
                for c in 0..r {
                    drep[[i, c]] += lambda * g0[[pos, c]];
                }
            }
        }

        // Propensity head gradient (cross-entropy plus targeted-term path).
        if let (Some(prop), Some(s)) = (&self.prop, &prop_cache) {
            let mut ds = Array2::<f64>::zeros((batch, 1));
            for i in 0..batch {
                let p = sigmoid(s[[i, 0]]);
                let mut g = alpha * (p - t[i]) / bf;
                if beta > 0.0 && p > PROP_CLAMP && p < 1.0 - PROP_CLAMP {
                    let e = y[i] - y_tilde[i];
                    let dw_dg = -t[i] / (g_prob[i] * g_prob[i])
                        - (1.0 - t[i]) / ((1.0 - g_prob[i]) * (1.0 - g_prob[i]));
                    let dtarg_dg = -2.0 * e * self.epsilon * dw_dg / bf;
                    g += beta * dtarg_dg * p * (1.0 - p);
                }
                ds[[i, 0]] = g;
            }
            let din = prop.backward(
                &rep_cache.out,
                &ds,
                grads.prop_w.as_mut().unwrap(),
                grads.prop_b.as_mut().unwrap(),
            );
            drep += &din;
        }

        stack_backward(
            &self.rep,
            &rep_cache,
            drep,
            true,
            &mut grads.rep_w,
            &mut grads.rep_b,
        );
        parts
    }

    fn apply_step(&mut self, grads: &Grads, lr: f64) {
        for (l, (gw, gb)) in self
            .rep
            .iter_mut()
            .zip(grads.rep_w.iter().zip(grads.rep_b.iter()))
        {
            l.step(gw, gb, lr);
        }
        for (l, (gw, gb)) in self
            .head0
            .iter_mut()
            .zip(grads.h0_w.iter().zip(grads.h0_b.iter()))
        {
            l.step(gw, gb, lr);
        }
        for (l, (gw, gb)) in self
            .head1
            .iter_mut()
            .zip(grads.h1_w.iter().zip(grads.h1_b.iter()))
        {
            l.step(gw, gb, lr);
        }
        if let Some(prop) = &mut self.prop {
            prop.step(
                grads.prop_w.as_ref().unwrap(),
                grads.prop_b.as_ref().unwrap(),
                lr,
            );
        }
        self.epsilon -= lr * grads.epsilon;
    }
}

/// Group-reweighted factual weights: treated 1/(2u), control 1/(2(1-u)),
/// with u the treated fraction, so both arm losses estimate their
/// population expectations.
fn factual_weights(t: &Array1<f64>) -> Vec<f64> {
    let n = t.len();
    let u = t.iter().filter(|&&v| v == 1.0).count() as f64 / n as f64;
    t.iter()
        .map(|&ti| {
            if ti == 1.0 {
                1.0 / (2.0 * u)
            } else {
                1.0 / (2.0 * (1.0 - u))
            }
        })
        .collect()
}

/// Train a representation network. The batch MMD² is always evaluated for
/// the trace; it enters the loss and gradients scaled by `ipm_weight`, so a
/// zero weight runs the exact no-penalty dynamics.
pub fn fit_repnet(dataset: &ObservationalDataset, config: &RepNetConfig) -> Result<RepNetModel> {
    config.validate()?;
    dataset.require_both_arms()?;
    let n = dataset.n();
    let t = &dataset.treatment;
    let y = &dataset.outcome;
    let w = factual_weights(t);

    let mut net = RepNetModel::init(dataset.covariates.ncols(), config);
    net.scaler = crate::nn::Standardizer::fit(dataset.covariates.view());
    let x = net.scaler.transform(dataset.covariates.view());
    let mut rng = RngSeed(config.seed).derive(1).rng();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = Grads::zeros_like(&net);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = LossParts::zero();
        let mut steps = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let tb: Vec<f64> = chunk.iter().map(|&i| t[i]).collect();
            let yb: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            let wb: Vec<f64> = chunk.iter().map(|&i| w[i]).collect();

            // Resolve the bandwidth on the current batch representations,
            // held constant through the step.
            let kernel = {
                let rep = net.rep_forward(&xb);
                let idx0: Vec<usize> = (0..chunk.len()).filter(|&i| tb[i] == 0.0).collect();
                let idx1: Vec<usize> = (0..chunk.len()).filter(|&i| tb[i] == 1.0).collect();
                if idx0.is_empty() || idx1.is_empty() {
                    None
                } else {
                    Some(config.kernel.resolve(
                        rep.select(Axis(0), &idx1).view(),
                        rep.select(Axis(0), &idx0).view(),
                    ))
                }
            };

            zero_grads(&mut grads);
            let parts = net.batch_pass(&xb, &tb, &yb, &wb, kernel, Some(&mut grads));
            let total = parts.total(config);
            if !total.is_finite() {
                return Err(Error::Training {
                    epoch,
                    message: "batch loss is non-finite".into(),
                });
            }
            net.apply_step(&grads, config.learning_rate);
            net.trace.step_total.push(total);
            net.trace.step_factual.push(parts.factual);
            epoch_sum.factual += parts.factual;
            epoch_sum.mmd += parts.mmd;
            epoch_sum.propensity += parts.propensity;
            epoch_sum.targeted += parts.targeted;
            steps += 1;
        }
        let s = steps as f64;
        net.trace.epochs.push(LossParts {
            factual: epoch_sum.factual / s,
            mmd: epoch_sum.mmd / s,
            propensity: epoch_sum.propensity / s,
            targeted: epoch_sum.targeted / s,
        });
    }
    Ok(net)
}

fn zero_grads(g: &mut Grads) {
    for a in g.rep_w.iter_mut().chain(&mut g.h0_w).chain(&mut g.h1_w) {
        a.fill(0.0);
    }
    for a in g.rep_b.iter_mut().chain(&mut g.h0_b).chain(&mut g.h1_b) {
        a.fill(0.0);
    }
    if let Some(a) = &mut g.prop_w {
        a.fill(0.0);
    }
    if let Some(a) = &mut g.prop_b {
        a.fill(0.0);
    }
    g.epsilon = 0.0;
}

/// Finite-difference check of the full training loss (factual + weighted
/// MMD + propensity + targeted terms) on one batch. Returns the maximum
/// scaled gradient error over every parameter including the perturbation
/// scalar. The bandwidth is resolved once and held fixed.
pub fn repnet_gradient_check(
    config: &RepNetConfig,
    x: ArrayView2<f64>,
    t: ArrayView1<f64>,
    y: ArrayView1<f64>,
) -> Result<f64> {
    config.validate()?;
    let mut net = RepNetModel::init(x.ncols(), config);
    // A nonzero perturbation scalar so its gradient path is exercised.
    if let DragonConfig::On { .. } = config.dragon {
        net.epsilon = 0.1;
    }
    let xb = x.to_owned();
    let tb: Vec<f64> = t.to_vec();
    let yb: Vec<f64> = y.to_vec();
    let tv = Array1::from(tb.clone());
    let wb = factual_weights(&tv);

    let kernel = {
        let rep = net.representation(xb.view());
        let idx0: Vec<usize> = (0..tb.len()).filter(|&i| tb[i] == 0.0).collect();
        let idx1: Vec<usize> = (0..tb.len()).filter(|&i| tb[i] == 1.0).collect();
        if idx0.is_empty() || idx1.is_empty() {
            None
        } else {
            Some(config.kernel.resolve(
                rep.select(Axis(0), &idx1).view(),
                rep.select(Axis(0), &idx0).view(),
            ))
        }
    };

    let mut grads = Grads::zeros_like(&net);
    net.batch_pass(&xb, &tb, &yb, &wb, kernel, Some(&mut grads));
    let mut analytic: Vec<f64> = Vec::with_capacity(net.n_params());
    for (gw, gb) in [
        (&grads.rep_w, &grads.rep_b),
        (&grads.h0_w, &grads.h0_b),
        (&grads.h1_w, &grads.h1_b),
    ] {
        for (w, b) in gw.iter().zip(gb.iter()) {
            analytic.extend(w.iter());
            analytic.extend(b.iter());
        }
    }
    if let (Some(pw), Some(pb)) = (&grads.prop_w, &grads.prop_b) {
        analytic.extend(pw.iter());
        analytic.extend(pb.iter());
    }
    analytic.push(grads.epsilon);

    let params = net.get_params();
    let h = 1e-5;
    let mut perturbed = params.clone();
    let mut max_err: f64 = 0.0;
    for k in 0..params.len() {
        perturbed[k] = params[k] + h;
        net.set_params(&perturbed);
        let up = net
            .batch_pass(&xb, &tb, &yb, &wb, kernel, None)
            .total(config);
        perturbed[k] = params[k] - h;
        net.set_params(&perturbed);
        let down = net
            .batch_pass(&xb, &tb, &yb, &wb, kernel, None)
            .total(config);
        perturbed[k] = params[k];
        let numeric = (up - down) / (2.0 * h);
        let denom = 1.0f64.max(analytic[k].abs()).max(numeric.abs());
        max_err = max_err.max((analytic[k] - numeric).abs() / denom);
    }
    net.set_params(&params);
    Ok(max_err)
}

/// Per-unit effects plus the averaged estimates from a propensity-headed
/// model: the plain mean of τ̂ and the targeted estimate applying the fitted
/// perturbation scalar through the inverse-weighting correction.
#[derive(Debug, Clone)]
pub struct DragonnetEstimate {
    pub tau: Array1<f64>,
    pub ate_mean: f64,
    pub ate_targeted: f64,
}

pub fn dragonnet_tau(
    model: &RepNetModel,
    dataset: &ObservationalDataset,
) -> Result<DragonnetEstimate> {
    if model.prop.is_none() {
        return Err(Error::Config(
            "targeted estimate requires a model trained with the propensity head on".into(),
        ));
    }
    let tau = model.predict_tau(dataset.covariates.view());
    let g = model.predict_propensity(dataset.covariates.view()).unwrap();
    let n = dataset.n();
    let mut plain = 0.0;
    let mut corrected = 0.0;
    for i in 0..n {
        let gi = g[i].clamp(PROP_CLAMP, 1.0 - PROP_CLAMP);
        plain += tau[i];
        corrected += tau[i] + model.epsilon * (1.0 / gi + 1.0 / (1.0 - gi));
    }
    Ok(DragonnetEstimate {
        tau,
        ate_mean: plain / n as f64,
        ate_targeted: corrected / n as f64,
    })
}

/// Write `trace.csv` with per-epoch loss components.
pub fn write_trace_csv(model: &RepNetModel, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = model
        .trace
        .epochs
        .iter()
        .enumerate()
        .map(|(e, p)| {
            vec![
                e.to_string(),
                format!("{}", p.factual),
                format!("{}", p.mmd),
                format!("{}", p.propensity),
                format!("{}", p.targeted),
            ]
        })
        .collect();
    let bytes = crate::io::rows_to_csv_bytes(
        &[
            "epoch",
            "factual_loss",
            "mmd",
            "propensity_loss",
            "targeted_term",
        ],
        &rows,
    )?;
    crate::io::atomic_write(path, &bytes)
}
