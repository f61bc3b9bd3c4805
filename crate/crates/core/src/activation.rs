//! Expected activations of Gaussian and Gaussian-mixture pre-activations.
//!
//! For `x ~ N(μ, σ²)`, `E[max(0, x)] = σ·NR(μ/σ)` with
//! `NR(z) = φ(z) + z·Φ(z)`. The first graph-convolution layer pushes each
//! mixture component through `L·X·W` (means through `L`, `W`; variances
//! through `L⊙L`, `W⊙W`) and averages the per-component expectations.

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmParams;
use crate::graph::Aggregation;
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::mask::MaskedFeatures;

/// Variances below this are treated as exactly zero: the expectation
/// collapses to the activation of the mean and no gradient flows to the variance.
pub const DEGENERATE_VARIANCE: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Error function (musl's implementation via `libm`, within about 1 ulp).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// Complementary error function, accurate in relative terms for large positive `x`.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal CDF `Φ(z) = (1 + erf(z/√2))/2`, computed through `erfc`
/// to keep relative accuracy in the lower tail.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `NR(z) = φ(z) + z·Φ(z)`, the mean of `max(0, N(z, 1))`.
///
/// Positive arguments use the exact reflection `NR(z) = z + NR(-z)`; the left
/// tail beyond `z < -8` uses the asymptotic expansion
/// `φ(t)/t² · Σ (-1)ⁿ (2n+1)!! / t²ⁿ` with `t = -z`.
pub fn nr(z: f64) -> f64 {
    NrParts::new(z).nr
}

/// `NR(z)`, `NR(-z)`, `Φ(z)` and `φ(z)` from one `erfc` and one `exp`.
struct NrParts {
    nr: f64,
    nr_neg: f64,
    cdf: f64,
    pdf: f64,
}

impl NrParts {
    fn new(z: f64) -> Self {
        let pdf = normal_pdf(z);
        let t = z.abs();
        // lower tail Φ(-t) and NR(-t), both accurate in relative terms
        let lower = normal_cdf(-t);
        let nr_lower = if t > 8.0 {
            let inv_t2 = 1.0 / (t * t);
            let mut term = 1.0;
            let mut sum = 1.0;
            let mut n = 0.0;
            loop {
                n += 1.0;
                let next = -term * (2.0 * n + 1.0) * inv_t2;
                if next.abs() >= term.abs() || next.abs() < 1e-17 {
                    break;
                }
                term = next;
                sum += term;
            }
            pdf * inv_t2 * sum
        } else {
            pdf - t * lower
        };
        if z > 0.0 {
            Self {
                nr: z + nr_lower,
                nr_neg: nr_lower,
                cdf: 1.0 - lower,
                pdf,
            }
        } else {
            Self {
                nr: nr_lower,
                nr_neg: nr_lower - z,
                cdf: lower,
                pdf,
            }
        }
    }
}

/// `dNR/dz = Φ(z)`.
pub fn nr_derivative(z: f64) -> f64 {
    normal_cdf(z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianScalar {
    mean: f64,
    variance: f64,
}

impl GaussianScalar {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid Gaussian N({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { alpha: f64 },
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
        }
    }
}

/// Expected activation of `N(mean, variance)` with its partial derivatives
/// `(value, ∂/∂mean, ∂/∂variance)`.
///
/// With `z = m/√s`: `∂(√s·NR(z))/∂m = Φ(z)` and `∂(√s·NR(z))/∂s = φ(z)/(2√s)`.
pub fn expected_with_grad(act: Activation, mean: f64, variance: f64) -> (f64, f64, f64) {
    if variance < DEGENERATE_VARIANCE {
        return (act.apply(mean), act.derivative(mean), 0.0);
    }
    let sd = variance.sqrt();
    let z = mean / sd;
    let parts = NrParts::new(z);
    let pos = sd * parts.nr;
    let pdf_term = parts.pdf / (2.0 * sd);
    match act {
        Activation::Relu => (pos, parts.cdf, pdf_term),
        Activation::LeakyRelu { alpha } => (
            pos - alpha * sd * parts.nr_neg,
            parts.cdf + alpha * (1.0 - parts.cdf),
            (1.0 - alpha) * pdf_term,
        ),
    }
}

pub fn expected_relu(g: GaussianScalar) -> f64 {
    expected_with_grad(Activation::Relu, g.mean, g.variance).0
}

pub fn expected_leaky_relu(g: GaussianScalar, alpha: f64) -> f64 {
    expected_with_grad(Activation::LeakyRelu { alpha }, g.mean, g.variance).0
}

/// Per-component means and variances of the first-layer pre-activation `L·X·W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMoments {
    pub m_hat: Vec<DenseMatrix>,
    pub s_hat: Vec<DenseMatrix>,
}

impl LayerMoments {
    pub fn k(&self) -> usize {
        self.m_hat.len()
    }
}

/// Inputs to the first layer that do not change during training.
#[derive(Debug, Clone)]
pub struct FirstLayerInput {
    /// `L·X̄`, with missing entries of `X̄` stored as zero.
    pub lx: DenseMatrix,
    /// Missing-entry indicator as a 0/1 sparse matrix.
    pub mask: SparseMatrix,
}

impl FirstLayerInput {
    pub fn new(agg: &Aggregation, xf: &MaskedFeatures) -> Result<Self> {
        Ok(Self {
            lx: agg.matrix().spmm(xf.x())?,
            mask: xf.mask().to_sparse(),
        })
    }

    pub fn has_missing(&self) -> bool {
        self.mask.nnz() > 0
    }
}

fn scale_rows(w: &DenseMatrix, scale: &[f64]) -> DenseMatrix {
    DenseMatrix::from_fn(w.rows(), w.cols(), |j, h| scale[j] * w.get(j, h))
}

/// `M̂ᵏ = L·Mᵏ·W` and `Ŝᵏ = (L⊙L)·Sᵏ·(W⊙W)`, sharing `L·X̄·W` across components
/// via `Mᵏ = X̄ + mask⊙(1·μᵏᵀ)` and `Sᵏ = mask⊙(1·σ²ᵏᵀ)`.
pub fn layer_moments_prepared(
    agg: &Aggregation,
    input: &FirstLayerInput,
    p: &GmmParams,
    w: &DenseMatrix,
) -> Result<LayerMoments> {
    if input.lx.cols() != w.rows() {
        return Err(Error::dims("layer_moments", input.lx.shape(), w.shape()));
    }
    if p.dim() != w.rows() {
        return Err(Error::dims("layer_moments", (p.k(), p.dim()), w.shape()));
    }
    let shared = input.lx.matmul(w)?;
    let k = p.k();
    let mut m_hat = Vec::with_capacity(k);
    let mut s_hat = Vec::with_capacity(k);
    if !input.has_missing() {
        let zeros = DenseMatrix::zeros(shared.rows(), shared.cols());
        for _ in 0..k {
            m_hat.push(shared.clone());
            s_hat.push(zeros.clone());
        }
        return Ok(LayerMoments { m_hat, s_hat });
    }
    let w_sq = w.map(|v| v * v);
    let vars = p.variances();
    for c in 0..k {
        let mean_part = agg.matrix().spmm(&input.mask.spmm(&scale_rows(w, p.mean(c)))?)?;
        let mut m = shared.clone();
        m.add_assign(&mean_part);
        m_hat.push(m);
        let var_part = agg.squared().spmm(&input.mask.spmm(&scale_rows(&w_sq, vars.row(c)))?)?;
        s_hat.push(var_part);
    }
    Ok(LayerMoments { m_hat, s_hat })
}

pub fn layer_moments(
    agg: &Aggregation,
    xf: &MaskedFeatures,
    p: &GmmParams,
    w: &DenseMatrix,
) -> Result<LayerMoments> {
    if agg.num_nodes() != xf.rows() {
        return Err(Error::dims(
            "layer_moments",
            (agg.num_nodes(), agg.num_nodes()),
            (xf.rows(), xf.cols()),
        ));
    }
    layer_moments_prepared(agg, &FirstLayerInput::new(agg, xf)?, p, w)
}

/// Forward values of the expected-activation layer plus what backprop needs.
#[derive(Debug, Clone)]
pub struct ExpectedActivation {
    pub output: DenseMatrix,
    /// Per-component expected activation `fᵏ`.
    pub values: Vec<DenseMatrix>,
    /// `∂fᵏ/∂M̂ᵏ`.
    pub d_mean: Vec<DenseMatrix>,
    /// `∂fᵏ/∂Ŝᵏ`.
    pub d_var: Vec<DenseMatrix>,
    /// `Σ_k π_k ∂fᵏ/∂M̂ᵏ`, exactly `σ'(M̂)` where every component is degenerate
    /// at the same mean.
    pub d_mean_total: DenseMatrix,
}

pub fn expected_activation_forward(
    moments: &LayerMoments,
    weights: &[f64],
    act: Activation,
) -> ExpectedActivation {
    let k = moments.k();
    assert_eq!(weights.len(), k, "one mixing weight per component");
    let (rows, cols) = moments.m_hat[0].shape();
    let mut output = DenseMatrix::zeros(rows, cols);
    let mut d_mean_total = DenseMatrix::zeros(rows, cols);
    let mut values = vec![DenseMatrix::zeros(rows, cols); k];
    let mut d_mean = vec![DenseMatrix::zeros(rows, cols); k];
    let mut d_var = vec![DenseMatrix::zeros(rows, cols); k];
    for p in 0..rows * cols {
        let m0 = moments.m_hat[0].data()[p];
        let collapsed = (0..k).all(|c| {
            moments.s_hat[c].data()[p] < DEGENERATE_VARIANCE && moments.m_hat[c].data()[p] == m0
        });
        let mut out = 0.0;
        let mut dm_total = 0.0;
        for c in 0..k {
            let (f, dm, ds) = expected_with_grad(act, moments.m_hat[c].data()[p], moments.s_hat[c].data()[p]);
            values[c].data_mut()[p] = f;
            d_mean[c].data_mut()[p] = dm;
            d_var[c].data_mut()[p] = ds;
            out += weights[c] * f;
            dm_total += weights[c] * dm;
        }
        if collapsed {
            out = act.apply(m0);
            dm_total = act.derivative(m0);
        }
        output.data_mut()[p] = out;
        d_mean_total.data_mut()[p] = dm_total;
    }
    ExpectedActivation {
        output,
        values,
        d_mean,
        d_var,
        d_mean_total,
    }
}

/// `Σ_k π_k E[σ(N(M̂ᵏ_ij, Ŝᵏ_ij))]` elementwise.
pub fn expected_activation_layer(moments: &LayerMoments, weights: &[f64], act: Activation) -> DenseMatrix {
    expected_activation_forward(moments, weights, act).output
}
