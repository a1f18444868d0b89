//! Synthetic data generators with embedded ground truth. Each generator
//! returns an [`ObservationalDataset`] whose `truth` carries the exact
//! potential-outcome means, per-unit effect, and assignment probability.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{GroundTruth, ObservationalDataset};
use crate::error::{Error, Result};
use crate::seed::RngSeed;

/// Tagged union of the built-in generators; this is the `generate` config
/// format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GeneratorConfig {
    /// Randomized treatment, linear outcome, constant effect.
    Linear(LinearDgp),
    /// Treatment and outcome share a linear confounder; constant effect.
    Confounded(ConfoundedDgp),
    /// Randomized treatment with a heterogeneous effect surface.
    Heterogeneous(HeterogeneousDgp),
    /// Nonlinear nuisances with a constant effect; the residualization
    /// test bed.
    PartiallyLinear(PartiallyLinearDgp),
}

impl GeneratorConfig {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GeneratorConfig::Linear(_) => "linear",
            GeneratorConfig::Confounded(_) => "confounded",
            GeneratorConfig::Heterogeneous(_) => "heterogeneous",
            GeneratorConfig::PartiallyLinear(_) => "partially-linear",
        }
    }

    pub fn generate(&self, seed: RngSeed) -> Result<ObservationalDataset> {
        match self {
            GeneratorConfig::Linear(g) => g.generate(seed),
            GeneratorConfig::Confounded(g) => g.generate(seed),
            GeneratorConfig::Heterogeneous(g) => g.generate(seed),
            GeneratorConfig::PartiallyLinear(g) => g.generate(seed),
        }
    }
}

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("generator: n must be >= 1".into()));
    }
    if d < 2 {
        return Err(Error::Config("generator: d must be >= 2".into()));
    }
    Ok(())
}

fn normal_matrix(n: usize, d: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut x = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            x[[i, j]] = rng.sample(StandardNormal);
        }
    }
    x
}

fn assemble(
    x: Array2<f64>,
    e: Array1<f64>,
    y0: Array1<f64>,
    y1: Array1<f64>,
    noise: f64,
    rng: &mut impl Rng,
) -> Result<ObservationalDataset> {
    let n = x.nrows();
    let mut t = Array1::<f64>::zeros(n);
    let mut y = Array1::<f64>::zeros(n);
    for i in 0..n {
        t[i] = f64::from(rng.gen_bool(e[i]));
        let mean = if t[i] == 1.0 { y1[i] } else { y0[i] };
        let eps: f64 = if noise > 0.0 {
            rng.sample::<f64, _>(StandardNormal) * noise
        } else {
            0.0
        };
        y[i] = mean + eps;
    }
    let truth = GroundTruth::new(y0, y1, Some(e));
    ObservationalDataset::unnamed(x, t, y, Some(truth))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LinearDgp {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    pub noise: f64,
}

impl Default for LinearDgp {
    fn default() -> Self {
        LinearDgp {
            n: 1000,
            d: 5,
            tau: 1.0,
            noise: 0.1,
        }
    }
}

impl LinearDgp {
    pub fn generate(&self, seed: RngSeed) -> Result<ObservationalDataset> {
        check_dims(self.n, self.d)?;
        let mut rng = seed.rng();
        let x = normal_matrix(self.n, self.d, &mut rng);
        // Geometric coefficient decay so every dimension matters a little.
        let beta: Vec<f64> = (0..self.d).map(|j| 0.5f64.powi(j as i32)).collect();
        let y0 = Array1::from_iter(
            (0..self.n).map(|i| (0..self.d).map(|j| beta[j] * x[[i, j]]).sum::<f64>()),
        );
        let y1 = &y0 + self.tau;
        let e = Array1::from_elem(self.n, 0.5);
        assemble(x, e, y0, y1, self.noise, &mut rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ConfoundedDgp {
    pub n: usize,
    pub d: usize,
    pub ate: f64,
    /// Strength of the confounder in the assignment logit.
    pub confounding: f64,
    /// Strength of the same confounder in the outcome; drives the designed
    /// bias of the naive arm difference.
    pub outcome_confounding: f64,
    pub noise: f64,
    /// Assignment probabilities are mapped into [lo, 1-lo] so inverse
    /// weights stay bounded.
    pub propensity_floor: f64,
}

impl Default for ConfoundedDgp {
    fn default() -> Self {
        ConfoundedDgp {
            n: 1000,
            d: 5,
            ate: 1.0,
            confounding: 1.5,
            outcome_confounding: 1.0,
            noise: 0.5,
            propensity_floor: 0.1,
        }
    }
}

impl ConfoundedDgp {
    pub fn generate(&self, seed: RngSeed) -> Result<ObservationalDataset> {
        check_dims(self.n, self.d)?;
        if !(self.propensity_floor > 0.0 && self.propensity_floor < 0.5) {
            return Err(Error::Config(
                "confounded: propensity_floor must be in (0, 0.5)".into(),
            ));
        }
        let mut rng = seed.rng();
        let x = normal_matrix(self.n, self.d, &mut rng);
        let lo = self.propensity_floor;
        let span = 1.0 - 2.0 * lo;
        let mut e = Array1::<f64>::zeros(self.n);
        let mut y0 = Array1::<f64>::zeros(self.n);
        for i in 0..self.n {
            let u = x[[i, 0]] + 0.5 * x[[i, 1]];
            e[i] = lo + span * crate::learners::sigmoid(self.confounding * u);
            y0[i] = self.outcome_confounding * u;
        }
        let y1 = &y0 + self.ate;
        assemble(x, e, y0, y1, self.noise, &mut rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HeterogeneousDgp {
    pub n: usize,
    pub d: usize,
    pub treated_fraction: f64,
    pub noise: f64,
    /// Linear effect surface τ(x) = 1 + x₀ + 0.5·x₁ when true; a step
    /// surface τ(x) = 1{x₀>0} + 0.5·1{x₁>0} otherwise.
    pub linear_tau: bool,
}

impl Default for HeterogeneousDgp {
    fn default() -> Self {
        HeterogeneousDgp {
            n: 1000,
            d: 5,
            treated_fraction: 0.5,
            noise: 0.1,
            linear_tau: true,
        }
    }
}

impl HeterogeneousDgp {
    pub fn tau_at(&self, x0: f64, x1: f64) -> f64 {
        if self.linear_tau {
            1.0 + x0 + 0.5 * x1
        } else {
            f64::from(x0 > 0.0) + 0.5 * f64::from(x1 > 0.0)
        }
    }

    pub fn generate(&self, seed: RngSeed) -> Result<ObservationalDataset> {
        check_dims(self.n, self.d)?;
        if !(self.treated_fraction > 0.0 && self.treated_fraction < 1.0) {
            return Err(Error::Config(
                "heterogeneous: treated_fraction must be in (0,1)".into(),
            ));
        }
        let mut rng = seed.rng();
        let x = normal_matrix(self.n, self.d, &mut rng);
        let mut y0 = Array1::<f64>::zeros(self.n);
        let mut y1 = Array1::<f64>::zeros(self.n);
        for i in 0..self.n {
            let base = 0.5 * x[[i, 2 % self.d]] + 0.25 * x[[i, 3 % self.d]];
            y0[i] = base;
            y1[i] = base + self.tau_at(x[[i, 0]], x[[i, 1]]);
        }
        let e = Array1::from_elem(self.n, self.treated_fraction);
        assemble(x, e, y0, y1, self.noise, &mut rng)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PartiallyLinearDgp {
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    pub noise: f64,
    pub propensity_floor: f64,
}

impl Default for PartiallyLinearDgp {
    fn default() -> Self {
        PartiallyLinearDgp {
            n: 1000,
            d: 5,
            tau: 0.5,
            noise: 0.5,
            propensity_floor: 0.1,
        }
    }
}

impl PartiallyLinearDgp {
    pub fn generate(&self, seed: RngSeed) -> Result<ObservationalDataset> {
        check_dims(self.n, self.d)?;
        let mut rng = seed.rng();
        let x = normal_matrix(self.n, self.d, &mut rng);
        let lo = self.propensity_floor;
        let span = 1.0 - 2.0 * lo;
        let mut e = Array1::<f64>::zeros(self.n);
        let mut y0 = Array1::<f64>::zeros(self.n);
        for i in 0..self.n {
            let x0 = x[[i, 0]];
            let x1 = x[[i, 1]];
            e[i] = lo + span * crate::learners::sigmoid(x0 + x1);
            y0[i] = x0.max(0.0) + x1 + 0.5 * x[[i, 2 % self.d]];
        }
        let y1 = &y0 + self.tau;
        assemble(x, e, y0, y1, self.noise, &mut rng)
    }
}
