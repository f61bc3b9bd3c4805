//! Hand-derived reverse pass.
//!
//! With `G` the gradient w.r.t. the first-layer output and
//! `Mᵏ = X̄ + mask⊙(1·μᵏᵀ)`, `Sᵏ = mask⊙(1·σ²ᵏᵀ)`:
//!
//! * `∂/∂W   = (L·X̄)ᵀ·Σ_k ∂M̂ᵏ + Σ_k diag(μᵏ)·maskᵀ·L·∂M̂ᵏ + 2 W ⊙ Σ_k diag(σ²ᵏ)·maskᵀ·(L⊙L)·∂Ŝᵏ`
//! * `∂/∂μᵏ_j = Σ_h (maskᵀ·L·∂M̂ᵏ)_{jh} W_{jh}`
//! * `∂/∂σ²ᵏ_j = Σ_h (maskᵀ·(L⊙L)·∂Ŝᵏ)_{jh} W²_{jh}`
//!
//! where `∂M̂ᵏ = π_k · G ⊙ ∂fᵏ/∂M̂` and `∂Ŝᵏ = π_k · G ⊙ ∂fᵏ/∂Ŝ`. `L` is symmetric.

use crate::activation::FirstLayerInput;
use crate::error::{Error, Result};
use crate::graph::Aggregation;
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::mask::MaskedFeatures;

use super::forward::{forward_prepared, DropoutMask, FirstLayer, Forward};
use super::metrics::{cross_entropy, decay_penalty};
use super::{ModelParams, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct GmmGradients {
    pub mix_logits: Vec<f64>,
    pub means: DenseMatrix,
    pub log_vars: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub gmm: Option<GmmGradients>,
}

impl Gradients {
    /// Views in the same order as the parameters they belong to.
    pub(crate) fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.weights.iter().map(DenseMatrix::data).collect();
        if let Some(g) = &self.gmm {
            out.push(&g.mix_logits);
            out.push(g.means.data());
            out.push(g.log_vars.data());
        }
        out
    }
}

/// `maskᵀ · r` for a 0/1 mask, accumulated in row-major mask order.
fn mask_transpose_times(mask: &SparseMatrix, r: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(mask.cols(), r.cols());
    for i in 0..mask.rows() {
        let src = r.row(i);
        for (j, _) in mask.row_iter(i) {
            for (o, &v) in out.row_mut(j).iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    out
}

/// Forward pass, loss and exact gradients for one full-batch step.
pub fn backward(
    params: &ModelParams,
    agg: &Aggregation,
    xf: &MaskedFeatures,
    labels: &[usize],
    train_idx: &[usize],
    cfg: &TrainConfig,
    dropout: Option<&DropoutMask>,
) -> Result<(f64, Gradients)> {
    let input = FirstLayerInput::new(agg, xf)?;
    let fwd = forward_prepared(params, agg, &input, dropout)?;
    let loss = cross_entropy(&fwd.logits, labels, train_idx)?
        + decay_penalty(params, cfg.weight_decay, cfg.decay_all_weights);
    let grads = backward_from(params, agg, &input, &fwd, labels, train_idx, cfg)?;
    Ok((loss, grads))
}

pub(crate) fn backward_from(
    params: &ModelParams,
    agg: &Aggregation,
    input: &FirstLayerInput,
    fwd: &Forward,
    labels: &[usize],
    train_idx: &[usize],
    cfg: &TrainConfig,
) -> Result<Gradients> {
    if train_idx.is_empty() {
        return Err(Error::EmptyIndex("training loss"));
    }
    let n_layers = params.weights.len();
    let act = params.activation;
    let cache = &fwd.cache;
    let l = agg.matrix();

    // d(mean CE)/d(logits)
    let mut grad = DenseMatrix::zeros(fwd.probs.rows(), fwd.probs.cols());
    let inv_n = 1.0 / train_idx.len() as f64;
    for &i in train_idx {
        let row = grad.row_mut(i);
        for (g, &p) in row.iter_mut().zip(fwd.probs.row(i)) {
            *g += p * inv_n;
        }
        row[labels[i]] -= inv_n;
    }

    let mut weight_grads: Vec<DenseMatrix> = vec![DenseMatrix::zeros(0, 0); n_layers];
    for layer in (1..n_layers).rev() {
        let pre_grad = if layer + 1 == n_layers {
            grad
        } else {
            let pre = &cache.hidden_pre[layer - 1];
            DenseMatrix::from_fn(pre.rows(), pre.cols(), |i, j| grad.get(i, j) * act.derivative(pre.get(i, j)))
        };
        weight_grads[layer] = cache.aggregated[layer - 1].matmul_tn(&pre_grad)?;
        grad = l.spmm(&pre_grad.matmul_nt(&params.weights[layer])?)?;
    }
    if let Some(scale) = &cache.dropout {
        grad = grad.hadamard(scale)?;
    }

    let w0 = &params.weights[0];
    let mut gmm_grads = None;
    match &cache.first {
        FirstLayer::Plain { pre } => {
            let d_pre = DenseMatrix::from_fn(pre.rows(), pre.cols(), |i, j| grad.get(i, j) * act.derivative(pre.get(i, j)));
            weight_grads[0] = input.lx.matmul_tn(&d_pre)?;
        }
        FirstLayer::Mixture {
            act: expected,
            mix_weights,
            ..
        } => {
            let gmm = params
                .gmm
                .as_ref()
                .expect("mixture first layer implies mixture parameters");
            let k = mix_weights.len();
            let d = w0.rows();
            let d_total = grad.hadamard(&expected.d_mean_total)?;
            let mut dw = input.lx.matmul_tn(&d_total)?;
            let mut d_means = DenseMatrix::zeros(k, d);
            let mut d_log_vars = DenseMatrix::zeros(k, d);
            let mut d_pi = vec![0.0; k];
            let vars = gmm.variances();
            for c in 0..k {
                d_pi[c] = grad
                    .data()
                    .iter()
                    .zip(expected.values[c].data())
                    .map(|(g, f)| g * f)
                    .sum();
                if !input.has_missing() {
                    continue;
                }
                let mut d_m = grad.hadamard(&expected.d_mean[c])?;
                d_m.scale_assign(mix_weights[c]);
                let mut d_s = grad.hadamard(&expected.d_var[c])?;
                d_s.scale_assign(mix_weights[c]);

                let u = mask_transpose_times(&input.mask, &l.spmm(&d_m)?);
                let v = mask_transpose_times(&input.mask, &agg.squared().spmm(&d_s)?);
                let mu = gmm.mean(c);
                let var = vars.row(c);
                for j in 0..d {
                    let (u_row, v_row, w_row) = (u.row(j), v.row(j), w0.row(j));
                    let mut dmu = 0.0;
                    let mut dvar = 0.0;
                    for h in 0..w_row.len() {
                        dmu += u_row[h] * w_row[h];
                        dvar += v_row[h] * w_row[h] * w_row[h];
                    }
                    d_means.set(c, j, dmu);
                    d_log_vars.set(c, j, dvar * var[j]);
                    let dw_row = dw.row_mut(j);
                    for h in 0..w_row.len() {
                        dw_row[h] += mu[j] * u_row[h] + 2.0 * w_row[h] * var[j] * v_row[h];
                    }
                }
            }
            // softmax Jacobian written as differences so equal d_pi gives exactly zero
            let d_logits = (0..k)
                .map(|c| mix_weights[c] * (0..k).map(|j| mix_weights[j] * (d_pi[c] - d_pi[j])).sum::<f64>())
                .collect();
            weight_grads[0] = dw;
            gmm_grads = Some(GmmGradients {
                mix_logits: d_logits,
                means: d_means,
                log_vars: d_log_vars,
            });
        }
    }

    let decayed = if cfg.decay_all_weights { n_layers } else { 1 };
    for (g, w) in weight_grads.iter_mut().zip(&params.weights).take(decayed) {
        for (gv, &wv) in g.data_mut().iter_mut().zip(w.data()) {
            *gv += 2.0 * cfg.weight_decay * wv;
        }
    }
    Ok(Gradients {
        weights: weight_grads,
        gmm: gmm_grads,
    })
}
