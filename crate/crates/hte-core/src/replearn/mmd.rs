//! Maximum mean discrepancy: the kernel two-sample statistic used as the
//! balance penalty between treated and control representations.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    Rbf {
        #[serde(default)]
        bandwidth: Bandwidth,
    },
    Linear,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Rbf {
            bandwidth: Bandwidth::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
#[derive(Default)]
pub enum Bandwidth {
    /// Median pairwise distance over the pooled sample, recomputed per call.
    #[default]
    MedianHeuristic,
    Fixed {
        sigma: f64,
    },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if let KernelSpec::Rbf {
            bandwidth: Bandwidth::Fixed { sigma },
        } = self
        {
            if !(sigma.is_finite() && *sigma > 0.0) {
                return Err(Error::Config("rbf bandwidth must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match self {
            KernelSpec::Rbf {
                bandwidth: Bandwidth::MedianHeuristic,
            } => "rbf(median)".into(),
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed { sigma },
            } => format!("rbf({sigma})"),
            KernelSpec::Linear => "linear".into(),
        }
    }

    /// Pin the bandwidth against a concrete pooled sample.
    pub(crate) fn resolve(&self, a: ArrayView2<f64>, b: ArrayView2<f64>) -> ResolvedKernel {
        match self {
            KernelSpec::Linear => ResolvedKernel::Linear,
            KernelSpec::Rbf {
                bandwidth: Bandwidth::Fixed { sigma },
            } => ResolvedKernel::Rbf { sigma: *sigma },
            KernelSpec::Rbf {
                bandwidth: Bandwidth::MedianHeuristic,
            } => ResolvedKernel::Rbf {
                sigma: median_pairwise_distance(a, b).max(1e-12),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum ResolvedKernel {
    Rbf { sigma: f64 },
    Linear,
}

fn median_pairwise_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let rows: Vec<ArrayView1<f64>> = a.rows().into_iter().chain(b.rows()).collect();
    let n = rows.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d2: f64 = rows[i]
                .iter()
                .zip(rows[j].iter())
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            dists.push(d2.sqrt());
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mid = dists.len() / 2;
    if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    }
}

/// The squared discrepancy plus sample bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpmValue {
    /// Biased V-statistic MMD², floored at zero.
    pub value: f64,
    pub kernel: String,
    pub n_a: usize,
    pub n_b: usize,
}

/// MMD² = mean k(a,a') + mean k(b,b') - 2·mean k(a,b), floored at 0.
pub fn mmd<'v>(
    a: ArrayView2<'v, f64>,
    b: ArrayView2<'v, f64>,
    kernel: &KernelSpec,
) -> Result<IpmValue> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Structural(
            "mmd: both samples must be non-empty".into(),
        ));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::Structural(format!(
            "mmd: dimension mismatch {} vs {}",
            a.ncols(),
            b.ncols()
        )));
    }
    kernel.validate()?;
    // Evaluate in a canonical argument order so mmd(a, b) and mmd(b, a) are
    // bit-identical despite floating-point summation order.
    let swap = match a.nrows().cmp(&b.nrows()) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.iter().lt(b.iter()),
    };
    let (first, second) = if swap { (b, a) } else { (a, b) };
    let resolved = kernel.resolve(first, second);
    let value = mmd_value(first, second, &resolved);
    Ok(IpmValue {
        value,
        kernel: kernel.describe(),
        n_a: a.nrows(),
        n_b: b.nrows(),
    })
}

fn kernel_eval(x: ArrayView1<f64>, y: ArrayView1<f64>, k: &ResolvedKernel) -> f64 {
    match k {
        ResolvedKernel::Linear => x.dot(&y),
        ResolvedKernel::Rbf { sigma } => {
            let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
    }
}

pub(crate) fn mmd_value(a: ArrayView2<f64>, b: ArrayView2<f64>, k: &ResolvedKernel) -> f64 {
    let (m, l) = (a.nrows(), b.nrows());
    let mut aa = 0.0;
    for i in 0..m {
        for j in 0..m {
            aa += kernel_eval(a.row(i), a.row(j), k);
        }
    }
    let mut bb = 0.0;
    for i in 0..l {
        for j in 0..l {
            bb += kernel_eval(b.row(i), b.row(j), k);
        }
    }
    let mut ab = 0.0;
    for i in 0..m {
        for j in 0..l {
            ab += kernel_eval(a.row(i), b.row(j), k);
        }
    }
    let raw = aa / (m * m) as f64 + bb / (l * l) as f64 - 2.0 * ab / (m * l) as f64;
    raw.max(0.0)
}

/// MMD² together with its gradient in each sample row. The bandwidth is
/// treated as a constant. A floored statistic (raw value below zero)
/// carries zero gradient.
pub(crate) fn mmd_with_grad(
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    k: &ResolvedKernel,
) -> (f64, Array2<f64>, Array2<f64>) {
    let (m, l) = (a.nrows(), b.nrows());
    let r = a.ncols();
    let mut grad_a = Array2::<f64>::zeros((m, r));
    let mut grad_b = Array2::<f64>::zeros((l, r));
    let value = mmd_value(a, b, k);
    if value == 0.0 {
        return (0.0, grad_a, grad_b);
    }
    match k {
        ResolvedKernel::Linear => {
            // MMD² = ‖mean(a) - mean(b)‖² for the linear kernel.
            let mean_a = a.mean_axis(ndarray::Axis(0)).unwrap();
            let mean_b = b.mean_axis(ndarray::Axis(0)).unwrap();
            let diff = &mean_a - &mean_b;
            for i in 0..m {
                grad_a.row_mut(i).assign(&(&diff * (2.0 / m as f64)));
            }
            for j in 0..l {
                grad_b.row_mut(j).assign(&(&diff * (-2.0 / l as f64)));
            }
        }
        ResolvedKernel::Rbf { sigma } => {
            let inv = 1.0 / (sigma * sigma);
            // within-a: d/da_p Σᵢⱼ k(aᵢ,aⱼ) = 2 Σⱼ k(a_p,aⱼ)(aⱼ-a_p)/σ²
            for p in 0..m {
                for j in 0..m {
                    if j == p {
                        continue;
                    }
                    let kv = kernel_eval(a.row(p), a.row(j), k) * inv;
                    for c in 0..r {
                        grad_a[[p, c]] += 2.0 / (m * m) as f64 * kv * (a[[j, c]] - a[[p, c]]);
                    }
                }
                for j in 0..l {
                    let kv = kernel_eval(a.row(p), b.row(j), k) * inv;
                    for c in 0..r {
                        grad_a[[p, c]] -= 2.0 / (m * l) as f64 * kv * (b[[j, c]] - a[[p, c]]);
                    }
                }
            }
            for p in 0..l {
                for j in 0..l {
                    if j == p {
                        continue;
                    }
                    let kv = kernel_eval(b.row(p), b.row(j), k) * inv;
                    for c in 0..r {
                        grad_b[[p, c]] += 2.0 / (l * l) as f64 * kv * (b[[j, c]] - b[[p, c]]);
                    }
                }
                for j in 0..m {
                    let kv = kernel_eval(b.row(p), a.row(j), k) * inv;
                    for c in 0..r {
                        grad_b[[p, c]] -= 2.0 / (m * l) as f64 * kv * (a[[j, c]] - b[[p, c]]);
                    }
                }
            }
        }
    }
    (value, grad_a, grad_b)
}
