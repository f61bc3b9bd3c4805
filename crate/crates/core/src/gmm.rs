//! Diagonal Gaussian mixture over node features.
//!
//! Mixing weights are stored as logits and variances as log-variances so that
//! gradient steps never leave the simplex or the positive orthant.

use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mask::{MaskedFeatures, MissingMask};
use crate::rng::rng_from_seed;

pub const VAR_FLOOR: f64 = 1e-6;

pub fn log_var_floor() -> f64 {
    VAR_FLOOR.ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub mix_logits: Vec<f64>,
    /// K×D component means.
    pub means: DenseMatrix,
    /// K×D component log-variances.
    pub log_vars: DenseMatrix,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl GmmParams {
    pub fn new(mix_logits: Vec<f64>, means: DenseMatrix, log_vars: DenseMatrix) -> Result<Self> {
        let k = mix_logits.len();
        if k == 0 {
            return Err(Error::InvalidArgument("mixture needs at least one component".into()));
        }
        if means.rows() != k || log_vars.shape() != means.shape() {
            return Err(Error::dims("GmmParams::new", means.shape(), log_vars.shape()));
        }
        if mix_logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mixing logit".into()));
        }
        Ok(Self {
            mix_logits,
            means,
            log_vars,
        })
    }

    /// Builds from mixing weights (must be positive) and plain variances.
    pub fn from_moments(weights: &[f64], means: DenseMatrix, variances: &DenseMatrix) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::InvalidArgument("mixing weights must be positive".into()));
        }
        if variances.data().iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument("variances must be positive".into()));
        }
        Self::new(
            weights.iter().map(|w| w.ln()).collect(),
            means,
            variances.map(f64::ln),
        )
    }

    pub fn k(&self) -> usize {
        self.mix_logits.len()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> Vec<f64> {
        softmax(&self.mix_logits)
    }

    pub fn variances(&self) -> DenseMatrix {
        self.log_vars.map(f64::exp)
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        self.means.row(k)
    }

    /// Clamps log-variances at the variance floor.
    pub fn apply_variance_floor(&mut self) {
        let floor = log_var_floor();
        for v in self.log_vars.data_mut() {
            if *v < floor {
                *v = floor;
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &GmmCheckpoint::new(self.clone()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        let ck: GmmCheckpoint = serde_json::from_reader(std::io::BufReader::new(f))?;
        ck.into_params()
    }
}

pub const GMM_CHECKPOINT_VERSION: u32 = 1;

/// Self-describing checkpoint: version tag, sizes, then the raw parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GmmCheckpoint {
    pub version: u32,
    pub k: usize,
    pub d: usize,
    pub params: GmmParams,
}

impl GmmCheckpoint {
    pub fn new(params: GmmParams) -> Self {
        Self {
            version: GMM_CHECKPOINT_VERSION,
            k: params.k(),
            d: params.dim(),
            params,
        }
    }

    pub fn into_params(self) -> Result<GmmParams> {
        if self.version != GMM_CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: self.version,
                expected: GMM_CHECKPOINT_VERSION,
            });
        }
        if self.params.k() != self.k || self.params.dim() != self.d {
            return Err(Error::InvalidArgument("checkpoint header disagrees with body".into()));
        }
        let p = self.params;
        GmmParams::new(p.mix_logits, p.means, p.log_vars)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmInit {
    /// EM on the marginal likelihood of each row's observed coordinates.
    Marginal,
    /// Column-mean imputation followed by complete-data EM.
    MeanImputed,
}

#[derive(Debug, Clone, Copy)]
pub struct EmOptions {
    pub k: usize,
    pub max_iter: usize,
    /// Stop when the mean per-row log-likelihood improves by less than this.
    pub tol: f64,
    pub seed: u64,
    pub init: EmInit,
}

impl EmOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 100,
            tol: 1e-4,
            seed,
            init: EmInit::Marginal,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub params: GmmParams,
    /// Total observed-data log-likelihood before the first M-step and after each one.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

/// EM returning only the fitted parameters; see [`em_fit_with`] for the full report.
pub fn em_fit(xf: &MaskedFeatures, k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<GmmParams> {
    let opts = EmOptions {
        k,
        max_iter,
        tol,
        seed,
        init: EmInit::Marginal,
    };
    em_fit_with(xf, &opts).map(|f| f.params)
}

pub fn em_fit_with(xf: &MaskedFeatures, opts: &EmOptions) -> Result<EmFit> {
    match opts.init {
        EmInit::Marginal => marginal_em(xf, opts),
        EmInit::MeanImputed => {
            let filled = column_mean_fill(xf);
            marginal_em(&MaskedFeatures::complete(filled), opts)
        }
    }
}

fn column_mean_fill(xf: &MaskedFeatures) -> DenseMatrix {
    let (n, d) = (xf.rows(), xf.cols());
    let mask = xf.mask();
    let mut means = vec![0.0; d];
    let mut counts = vec![0usize; d];
    for i in 0..n {
        for j in 0..d {
            if !mask.is_missing(i, j) {
                means[j] += xf.x().get(i, j);
                counts[j] += 1;
            }
        }
    }
    for j in 0..d {
        if counts[j] > 0 {
            means[j] /= counts[j] as f64;
        }
    }
    DenseMatrix::from_fn(n, d, |i, j| {
        if mask.is_missing(i, j) {
            means[j]
        } else {
            xf.x().get(i, j)
        }
    })
}

struct Stats {
    /// N×K responsibilities.
    resp: Vec<f64>,
    log_likelihood: f64,
}

/// Internal EM state with plain weights and variances.
struct Mixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    vars: Vec<f64>,
}

fn e_step(xf: &MaskedFeatures, m: &Mixture, k: usize) -> Stats {
    let (n, d) = (xf.rows(), xf.cols());
    let x = xf.x();
    let mask = xf.mask();
    let log_norm: Vec<f64> = m.vars.iter().map(|v| -0.5 * (2.0 * PI * v).ln()).collect();
    let inv_two_var: Vec<f64> = m.vars.iter().map(|v| 0.5 / v).collect();
    let log_w: Vec<f64> = m.weights.iter().map(|w| w.ln()).collect();
    let mut resp = vec![0.0; n * k];
    let mut total = 0.0;
    let mut logp = vec![0.0; k];
    for i in 0..n {
        let row = x.row(i);
        for (c, lp) in logp.iter_mut().enumerate() {
            let mut s = log_w[c];
            let base = c * d;
            for j in 0..d {
                if !mask.is_missing(i, j) {
                    let diff = row[j] - m.means[base + j];
                    s += log_norm[base + j] - diff * diff * inv_two_var[base + j];
                }
            }
            *lp = s;
        }
        let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = logp.iter().map(|l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse;
        for c in 0..k {
            resp[i * k + c] = (logp[c] - lse).exp();
        }
    }
    Stats {
        resp,
        log_likelihood: total,
    }
}

fn m_step(xf: &MaskedFeatures, stats: &Stats, m: &mut Mixture, k: usize, dead_columns: &[bool]) {
    let (n, d) = (xf.rows(), xf.cols());
    let x = xf.x();
    let mask = xf.mask();
    let resp = &stats.resp;
    for c in 0..k {
        let nk: f64 = (0..n).map(|i| resp[i * k + c]).sum();
        m.weights[c] = nk / n as f64;
        for j in 0..d {
            if dead_columns[j] {
                continue;
            }
            let mut w_sum = 0.0;
            let mut wx = 0.0;
            for i in 0..n {
                if !mask.is_missing(i, j) {
                    let r = resp[i * k + c];
                    w_sum += r;
                    wx += r * x.get(i, j);
                }
            }
            // A component with no responsibility on this coordinate keeps its
            // previous values; the likelihood does not depend on them.
            if w_sum <= f64::MIN_POSITIVE {
                continue;
            }
            let mu = wx / w_sum;
            let mut wvar = 0.0;
            for i in 0..n {
                if !mask.is_missing(i, j) {
                    let diff = x.get(i, j) - mu;
                    wvar += resp[i * k + c] * diff * diff;
                }
            }
            m.means[c * d + j] = mu;
            m.vars[c * d + j] = (wvar / w_sum).max(VAR_FLOOR);
        }
    }
}

fn observed_fraction(mask: &MissingMask, i: usize) -> f64 {
    let d = mask.cols();
    (0..d).filter(|&j| !mask.is_missing(i, j)).count() as f64 / d as f64
}

/// k-means++ seeding over rows with at least half of their entries observed.
fn seed_means(xf: &MaskedFeatures, k: usize, col_means: &[f64], seed: u64) -> Vec<f64> {
    let (n, d) = (xf.rows(), xf.cols());
    let mask = xf.mask();
    let x = xf.x();
    let mut rng = rng_from_seed(seed);
    let mut candidates: Vec<usize> = (0..n).filter(|&i| observed_fraction(mask, i) >= 0.5).collect();
    if candidates.len() < k {
        candidates = (0..n).filter(|&i| observed_fraction(mask, i) > 0.0).collect();
    }
    if candidates.len() < k {
        candidates = (0..n).collect();
    }
    let center_of = |i: usize| -> Vec<f64> {
        (0..d)
            .map(|j| if mask.is_missing(i, j) { col_means[j] } else { x.get(i, j) })
            .collect()
    };
    let dist = |i: usize, c: &[f64]| -> f64 {
        let mut s = 0.0;
        let mut cnt = 0usize;
        for j in 0..d {
            if !mask.is_missing(i, j) {
                let diff = x.get(i, j) - c[j];
                s += diff * diff;
                cnt += 1;
            }
        }
        if cnt == 0 {
            0.0
        } else {
            s / cnt as f64
        }
    };
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = candidates[rng.random_range(0..candidates.len())];
    centers.push(center_of(first));
    let mut best: Vec<f64> = candidates.iter().map(|&i| dist(i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = best.len() - 1;
            for (idx, &b) in best.iter().enumerate() {
                if u < b {
                    chosen = idx;
                    break;
                }
                u -= b;
            }
            chosen
        } else {
            rng.random_range(0..candidates.len())
        };
        let c = center_of(candidates[pick]);
        for (b, &i) in best.iter_mut().zip(&candidates) {
            *b = b.min(dist(i, &c));
        }
        centers.push(c);
    }
    centers.concat()
}

fn marginal_em(xf: &MaskedFeatures, opts: &EmOptions) -> Result<EmFit> {
    let (n, d) = (xf.rows(), xf.cols());
    let k = opts.k;
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if k > n {
        return Err(Error::TooManyComponents(k, n));
    }
    let mask = xf.mask();
    let x = xf.x();
    let mut diagnostics = Vec::new();

    let mut col_means = vec![0.0; d];
    let mut col_vars = vec![1.0; d];
    let mut dead_columns = vec![false; d];
    for j in 0..d {
        let vals: Vec<f64> = (0..n).filter(|&i| !mask.is_missing(i, j)).map(|i| x.get(i, j)).collect();
        if vals.is_empty() {
            dead_columns[j] = true;
            let msg = format!("feature column {j} has no observed entries; using mean 0, variance 1");
            warn!("{msg}");
            diagnostics.push(msg);
            continue;
        }
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
        col_means[j] = mean;
        col_vars[j] = var.max(VAR_FLOOR);
    }

    let mut mix = Mixture {
        weights: vec![1.0 / k as f64; k],
        means: seed_means(xf, k, &col_means, opts.seed),
        vars: (0..k).flat_map(|_| col_vars.iter().copied()).collect(),
    };
    for j in (0..d).filter(|&j| dead_columns[j]) {
        for c in 0..k {
            mix.means[c * d + j] = 0.0;
            mix.vars[c * d + j] = 1.0;
        }
    }

    let mut stats = e_step(xf, &mix, k);
    let mut history = vec![stats.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        m_step(xf, &stats, &mut mix, k, &dead_columns);
        iterations += 1;
        let next = e_step(xf, &mix, k);
        let gain = (next.log_likelihood - stats.log_likelihood) / n as f64;
        history.push(next.log_likelihood);
        stats = next;
        if gain < opts.tol {
            converged = true;
            break;
        }
    }

    let logits = mix.weights.iter().map(|w| w.max(f64::MIN_POSITIVE).ln()).collect();
    let means = DenseMatrix::from_raw(k, d, mix.means);
    let log_vars = DenseMatrix::from_raw(k, d, mix.vars.iter().map(|v| v.ln()).collect());
    Ok(EmFit {
        params: GmmParams::new(logits, means, log_vars)?,
        log_likelihoods: history,
        iterations,
        converged,
        diagnostics,
    })
}

/// Per-row observed-data log-likelihood under `p`, summed.
pub fn observed_log_likelihood(xf: &MaskedFeatures, p: &GmmParams) -> f64 {
    let mix = Mixture {
        weights: p.weights(),
        means: p.means.data().to_vec(),
        vars: p.variances().into_data(),
    };
    e_step(xf, &mix, p.k()).log_likelihood
}

/// Responsibilities (N×K) of each component for each row, from observed coordinates.
pub fn responsibilities(xf: &MaskedFeatures, p: &GmmParams) -> DenseMatrix {
    let mix = Mixture {
        weights: p.weights(),
        means: p.means.data().to_vec(),
        vars: p.variances().into_data(),
    };
    DenseMatrix::from_raw(xf.rows(), p.k(), e_step(xf, &mix, p.k()).resp)
}

/// Mean and variance matrices of one component: observed entries are
/// degenerate at their value, missing entries take the component's moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentMoments {
    pub m: DenseMatrix,
    pub s: DenseMatrix,
}

pub fn component_moments(xf: &MaskedFeatures, p: &GmmParams, k: usize) -> ComponentMoments {
    let mask = xf.mask();
    let x = xf.x();
    let mu = p.mean(k);
    let var: Vec<f64> = p.log_vars.row(k).iter().map(|v| v.exp()).collect();
    let (n, d) = (xf.rows(), xf.cols());
    let m = DenseMatrix::from_fn(n, d, |i, j| if mask.is_missing(i, j) { mu[j] } else { x.get(i, j) });
    let s = DenseMatrix::from_fn(n, d, |i, j| if mask.is_missing(i, j) { var[j] } else { 0.0 });
    ComponentMoments { m, s }
}

/// Observed entries kept; missing entries replaced by the mixture mean `Σ_k π_k μ^[k]`.
pub fn reconstructed_features(xf: &MaskedFeatures, p: &GmmParams) -> DenseMatrix {
    let w = p.weights();
    let d = xf.cols();
    let mixture_mean: Vec<f64> = (0..d)
        .map(|j| (0..p.k()).map(|c| w[c] * p.means.get(c, j)).sum())
        .collect();
    let mask = xf.mask();
    let x = xf.x();
    DenseMatrix::from_fn(xf.rows(), d, |i, j| {
        if mask.is_missing(i, j) {
            mixture_mean[j]
        } else {
            x.get(i, j)
        }
    })
}

/// Mean absolute error over masked entries only.
pub fn reconstruction_mae(recon: &DenseMatrix, truth: &DenseMatrix, mask: &MissingMask) -> Result<f64> {
    if recon.shape() != truth.shape() {
        return Err(Error::dims("reconstruction_mae", recon.shape(), truth.shape()));
    }
    if recon.shape() != mask.shape() {
        return Err(Error::dims("reconstruction_mae", recon.shape(), mask.shape()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, j) in mask.positions() {
        total += (recon.get(i, j) - truth.get(i, j)).abs();
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{apply_mask, generate_mask, MaskSpec, MissingPattern};
    use rand_distr::{Distribution, Normal};

    fn params(weights: &[f64], means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> GmmParams {
        GmmParams::from_moments(
            weights,
            DenseMatrix::from_rows(&means).unwrap(),
            &DenseMatrix::from_rows(&vars).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_component_complete_data_is_mle() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 10.0], vec![2.0, 14.0], vec![6.0, 12.0]]).unwrap();
        let p = em_fit(&MaskedFeatures::complete(x), 1, 50, 1e-10, 0).unwrap();
        assert!((p.means.get(0, 0) - 3.0).abs() < 1e-12);
        assert!((p.means.get(0, 1) - 12.0).abs() < 1e-12);
        let var = p.variances();
        assert!((var.get(0, 0) - 14.0 / 3.0).abs() < 1e-12);
        assert!((var.get(0, 1) - 8.0 / 3.0).abs() < 1e-12);
        assert!((p.weights()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn single_component_uses_observed_entries() {
        let x = DenseMatrix::from_rows(&[vec![1.0], vec![0.0], vec![3.0]]).unwrap();
        let mask = MissingMask::from_positions(3, 1, &[(1, 0)]).unwrap();
        let xf = apply_mask(&x, &mask).unwrap();
        let p = em_fit(&xf, 1, 20, 1e-10, 0).unwrap();
        assert!((p.means.get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_many_components() {
        let xf = MaskedFeatures::complete(DenseMatrix::zeros(2, 2));
        assert!(matches!(em_fit(&xf, 3, 10, 1e-6, 0), Err(Error::TooManyComponents(3, 2))));
    }

    #[test]
    fn fully_missing_column_gets_default_with_diagnostic() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let mask = MissingMask::from_positions(3, 2, &[(0, 1), (1, 1), (2, 1)]).unwrap();
        let fit = em_fit_with(&apply_mask(&x, &mask).unwrap(), &EmOptions::new(2, 1)).unwrap();
        assert_eq!(fit.diagnostics.len(), 1);
        for c in 0..2 {
            assert_eq!(fit.params.means.get(c, 1), 0.0);
            assert!((fit.params.variances().get(c, 1) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn recovers_two_clusters() {
        let (n, d) = (200, 4);
        let mut rng = rng_from_seed(5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let x = DenseMatrix::from_fn(n, d, |i, _| {
            let c = if labels[i] == 0 { -3.0 } else { 3.0 };
            c + noise.sample(&mut rng)
        });
        let mask = generate_mask(
            &MaskSpec {
                pattern: MissingPattern::Uniform,
                mr: 0.2,
                seed: 6,
            },
            n,
            d,
        )
        .unwrap();
        let xf = apply_mask(&x, &mask).unwrap();
        let fit = em_fit_with(&xf, &EmOptions::new(2, 7)).unwrap();
        let p = &fit.params;
        // Match components to clusters by the sign of their first mean.
        let neg = if p.means.get(0, 0) < 0.0 { 0 } else { 1 };
        for j in 0..d {
            assert!((p.means.get(neg, j) + 3.0).abs() < 0.3);
            assert!((p.means.get(1 - neg, j) - 3.0).abs() < 0.3);
        }
        let r = responsibilities(&xf, p);
        let correct = (0..n)
            .filter(|&i| {
                let assigned = if r.get(i, neg) > 0.5 { 0 } else { 1 };
                assigned == labels[i]
            })
            .count();
        assert!(correct as f64 >= 0.95 * n as f64);
        for w in fit.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
    }

    #[test]
    fn mean_imputed_init_runs() {
        let x = DenseMatrix::from_fn(30, 3, |i, j| (i * 3 + j) as f64 * 0.1);
        let mask = MissingMask::from_positions(30, 3, &[(0, 0), (5, 2)]).unwrap();
        let opts = EmOptions {
            init: EmInit::MeanImputed,
            ..EmOptions::new(2, 3)
        };
        let fit = em_fit_with(&apply_mask(&x, &mask).unwrap(), &opts).unwrap();
        assert!((fit.params.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_branches() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = params(&[0.3, 0.7], vec![vec![10.0, 20.0], vec![30.0, 40.0]], vec![vec![1.0, 2.0], vec![3.0, 4.0]]);

        let cm = component_moments(&MaskedFeatures::complete(x.clone()), &p, 1);
        assert_eq!(cm.m, x);
        assert_eq!(cm.s, DenseMatrix::zeros(2, 2));

        let mask = MissingMask::from_positions(2, 2, &[(0, 0), (0, 1), (1, 1)]).unwrap();
        let xf = apply_mask(&x, &mask).unwrap();
        let cm = component_moments(&xf, &p, 1);
        assert_eq!(cm.m.row(0), &[30.0, 40.0]);
        assert!((cm.s.get(0, 0) - 3.0).abs() < 1e-14 && (cm.s.get(0, 1) - 4.0).abs() < 1e-14);
        assert_eq!(cm.m.row(1), &[3.0, 40.0]);
        assert_eq!(cm.s.get(1, 0), 0.0);
    }

    #[test]
    fn reconstruction_cases() {
        let x = DenseMatrix::from_rows(&[vec![5.0, 7.0]]).unwrap();
        let mask = MissingMask::from_positions(1, 2, &[(0, 1)]).unwrap();
        let xf = apply_mask(&x, &mask).unwrap();

        let one = params(&[1.0], vec![vec![1.0, 4.0]], vec![vec![1.0, 1.0]]);
        assert_eq!(reconstructed_features(&xf, &one).data(), &[5.0, 4.0]);

        let two = params(&[0.5, 0.5], vec![vec![0.0, 0.0], vec![0.0, 2.0]], vec![vec![1.0; 2], vec![1.0; 2]]);
        let r = reconstructed_features(&xf, &two);
        assert_eq!(r.get(0, 0).to_bits(), 5.0f64.to_bits());
        assert!((r.get(0, 1) - 1.0).abs() < 1e-15);

        assert_eq!(reconstruction_mae(&x, &x, &mask).unwrap(), 0.0);
        let off = DenseMatrix::from_rows(&[vec![5.0, 7.5]]).unwrap();
        assert_eq!(reconstruction_mae(&off, &x, &mask).unwrap(), 0.5);
        assert!(matches!(
            reconstruction_mae(&x, &x, &MissingMask::none(1, 2)),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = GmmParams::new(
            vec![0.1, -0.7],
            DenseMatrix::from_rows(&[vec![0.1, -1.0 / 3.0], vec![2.5, 1e-17]]).unwrap(),
            DenseMatrix::from_rows(&[vec![-0.5, 0.3], vec![1.0 / 7.0, -13.8]]).unwrap(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gmm.json");
        p.save(&path).unwrap();
        assert_eq!(GmmParams::load(&path).unwrap(), p);
    }
}
