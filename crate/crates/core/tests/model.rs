use gcnmf::activation::Activation;
use gcnmf::gmm::GmmParams;
use gcnmf::graph::{build_aggregation, Aggregation, Graph};
use gcnmf::linalg::DenseMatrix;
use gcnmf::mask::{apply_mask, generate_mask, MaskSpec, MaskedFeatures, MissingPattern};
use gcnmf::model::{backward, forward, DropoutMask, ModelParams, TrainConfig};
use gcnmf::rng::rng_from_seed;
use rand::Rng;

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| scale * (2.0 * rng.random::<f64>() - 1.0))
}

fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::new(n, edges).unwrap()
}

struct Instance {
    agg: Aggregation,
    xf: MaskedFeatures,
    labels: Vec<usize>,
    train: Vec<usize>,
    params: ModelParams,
}

fn instance(n: usize, d: usize, k: usize, hidden: &[usize], c: usize, mr: f64, act: Activation, seed: u64) -> Instance {
    let mut rng = rng_from_seed(seed);
    let graph = random_graph(n, 0.4, &mut rng);
    let x = random_matrix(n, d, 1.5, &mut rng);
    let mask = generate_mask(
        &MaskSpec {
            pattern: MissingPattern::Uniform,
            mr,
            seed,
        },
        n,
        d,
    )
    .unwrap();
    let xf = apply_mask(&x, &mask).unwrap();
    let mut dims = vec![d];
    dims.extend(hidden);
    dims.push(c);
    let weights = dims.windows(2).map(|w| random_matrix(w[0], w[1], 0.8, &mut rng)).collect();
    let gmm = GmmParams::new(
        (0..k).map(|_| rng.random::<f64>() - 0.5).collect(),
        random_matrix(k, d, 1.0, &mut rng),
        random_matrix(k, d, 0.7, &mut rng),
    )
    .unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..c)).collect();
    Instance {
        agg: build_aggregation(&graph),
        xf,
        labels,
        train: (0..n).step_by(2).collect(),
        params: ModelParams {
            weights,
            gmm: Some(gmm),
            activation: act,
        },
    }
}

fn flatten(p: &ModelParams) -> Vec<f64> {
    let mut v: Vec<f64> = p.weights.iter().flat_map(|w| w.data().to_vec()).collect();
    if let Some(g) = &p.gmm {
        v.extend(&g.mix_logits);
        v.extend(g.means.data());
        v.extend(g.log_vars.data());
    }
    v
}

fn unflatten(template: &ModelParams, flat: &[f64]) -> ModelParams {
    let mut at = 0;
    let mut take = |rows: usize, cols: usize| {
        let m = DenseMatrix::new(rows, cols, flat[at..at + rows * cols].to_vec()).unwrap();
        at += rows * cols;
        m
    };
    let weights = template.weights.iter().map(|w| take(w.rows(), w.cols())).collect();
    let gmm = template.gmm.as_ref().map(|g| {
        let logits = take(1, g.k()).into_data();
        GmmParams::new(logits, take(g.k(), g.dim()), take(g.k(), g.dim())).unwrap()
    });
    ModelParams {
        weights,
        gmm,
        activation: template.activation,
    }
}

/// Returns (max relative error, coordinates checked).
fn gradient_check(inst: &Instance, cfg: &TrainConfig, coords: Option<usize>, seed: u64) -> (f64, usize) {
    let n = inst.xf.rows();
    let h1 = inst.params.weights[0].cols();
    let mut rng = rng_from_seed(seed ^ 0xd209);
    let dropout = DropoutMask::sample(n, h1, 0.3, &mut rng);
    let (_, grads) = backward(&inst.params, &inst.agg, &inst.xf, &inst.labels, &inst.train, cfg, Some(&dropout)).unwrap();
    let mut analytic: Vec<f64> = grads.weights.iter().flat_map(|w| w.data().to_vec()).collect();
    let g = grads.gmm.as_ref().unwrap();
    analytic.extend(&g.mix_logits);
    analytic.extend(g.means.data());
    analytic.extend(g.log_vars.data());

    let base = flatten(&inst.params);
    assert_eq!(base.len(), analytic.len());
    let idx: Vec<usize> = match coords {
        Some(m) => (0..m).map(|_| rng.random_range(0..base.len())).collect(),
        None => (0..base.len()).collect(),
    };
    let loss_at = |flat: &[f64]| {
        let p = unflatten(&inst.params, flat);
        backward(&p, &inst.agg, &inst.xf, &inst.labels, &inst.train, cfg, Some(&dropout)).unwrap().0
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for &i in &idx {
        let mut plus = base.clone();
        plus[i] += h;
        let mut minus = base.clone();
        minus[i] -= h;
        let numeric = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);
        let a = analytic[i];
        let scale = a.abs().max(numeric.abs());
        // Both below the finite-difference noise floor counts as agreement.
        let rel = if scale < 1e-8 { 0.0 } else { (a - numeric).abs() / scale };
        worst = worst.max(rel);
    }
    (worst, idx.len())
}

#[test]
fn gradients_match_finite_differences_relu() {
    let cfg = TrainConfig {
        weight_decay: 5e-3,
        ..TrainConfig::default()
    };
    for seed in 0..4 {
        let inst = instance(10, 6, 3, &[5], 3, 0.4, Activation::Relu, seed);
        let (worst, _) = gradient_check(&inst, &cfg, None, seed);
        assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
    }
}

#[test]
fn gradients_match_finite_differences_leaky_deep_all_decay() {
    let cfg = TrainConfig {
        weight_decay: 1e-2,
        decay_all_weights: true,
        ..TrainConfig::default()
    };
    let inst = instance(9, 5, 2, &[4, 3], 2, 0.5, Activation::LeakyRelu { alpha: 0.1 }, 11);
    let (worst, _) = gradient_check(&inst, &cfg, None, 11);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn gradients_on_hundred_random_coordinates() {
    let inst = instance(10, 6, 3, &[8], 3, 0.3, Activation::Relu, 42);
    let (worst, checked) = gradient_check(&inst, &TrainConfig::default(), Some(100), 42);
    assert_eq!(checked, 100);
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn complete_features_give_zero_mixture_gradients() {
    let inst = instance(8, 4, 3, &[5], 2, 0.0, Activation::Relu, 3);
    let (_, grads) = backward(&inst.params, &inst.agg, &inst.xf, &inst.labels, &inst.train, &TrainConfig::default(), None).unwrap();
    let g = grads.gmm.unwrap();
    assert!(g.means.data().iter().all(|&v| v == 0.0));
    assert!(g.log_vars.data().iter().all(|&v| v == 0.0));
    assert!(g.mix_logits.iter().all(|&v| v == 0.0));
}

#[test]
fn mix_logit_gradient_sums_to_zero() {
    for seed in 0..5 {
        let inst = instance(10, 6, 4, &[5], 3, 0.5, Activation::Relu, seed);
        let (_, grads) = backward(&inst.params, &inst.agg, &inst.xf, &inst.labels, &inst.train, &TrainConfig::default(), None).unwrap();
        let g = grads.gmm.unwrap();
        let sum: f64 = g.mix_logits.iter().sum();
        let scale: f64 = g.mix_logits.iter().map(|v| v.abs()).sum();
        assert!(sum.abs() <= 1e-14 * scale.max(1e-300), "sum {sum}");
    }
}

#[test]
fn joint_forward_equals_plain_on_complete_features() {
    for seed in 0..5 {
        let inst = instance(12, 5, 3, &[6], 3, 0.0, Activation::Relu, seed);
        let plain = ModelParams {
            gmm: None,
            ..inst.params.clone()
        };
        let a = forward(&inst.params, &inst.agg, &inst.xf, None).unwrap();
        let b = forward(&plain, &inst.agg, &inst.xf, None).unwrap();
        assert!(a.logits.max_abs_diff(&b.logits) <= 1e-10);
    }
}

#[test]
fn zero_weights_give_uniform_probabilities() {
    let mut inst = instance(7, 4, 2, &[3], 4, 0.3, Activation::Relu, 5);
    for w in &mut inst.params.weights {
        *w = DenseMatrix::zeros(w.rows(), w.cols());
    }
    let out = forward(&inst.params, &inst.agg, &inst.xf, None).unwrap();
    assert!(out.probs.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
}

#[test]
fn softmax_rows_sum_to_one_and_logits_finite() {
    for seed in 0..5 {
        let inst = instance(10, 6, 3, &[5], 4, 0.6, Activation::Relu, seed);
        let out = forward(&inst.params, &inst.agg, &inst.xf, None).unwrap();
        assert!(out.logits.is_finite());
        for i in 0..out.probs.rows() {
            assert!((out.probs.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn plain_mode_rejects_missing_features() {
    let inst = instance(6, 3, 2, &[3], 2, 0.5, Activation::Relu, 1);
    let plain = ModelParams {
        gmm: None,
        ..inst.params
    };
    assert!(forward(&plain, &inst.agg, &inst.xf, None).is_err());
}

mod oracle {
    //! Straight-line dense re-implementation. Expected activations come from
    //! numerical quadrature rather than the closed form.
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    fn expected_act(act: Activation, m: f64, s: f64) -> f64 {
        if s < 1e-10 {
            return act.apply(m);
        }
        let sd = s.sqrt();
        let density = |x: f64| (-(x - m) * (x - m) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
        // split at the kink so the integrand is smooth on each piece
        let lo = (m - 12.0 * sd).min(0.0);
        let hi = (m + 12.0 * sd).max(0.0);
        simpson(|x| act.apply(x) * density(x), lo, 0.0, 20_000) + simpson(|x| act.apply(x) * density(x), 0.0, hi, 20_000)
    }

    fn dense(a: &DenseMatrix) -> Vec<Vec<f64>> {
        (0..a.rows()).map(|i| a.row(i).to_vec()).collect()
    }

    fn mm(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (n, k, m) = (a.len(), b.len(), b[0].len());
        let mut out = vec![vec![0.0; m]; n];
        for i in 0..n {
            for t in 0..k {
                for j in 0..m {
                    out[i][j] += a[i][t] * b[t][j];
                }
            }
        }
        out
    }

    /// Aggregation built from scratch from the edge list.
    fn aggregation(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = 1.0;
        }
        for &(i, j) in edges {
            a[i][j] = 1.0;
            a[j][i] = 1.0;
        }
        let d: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
        (0..n)
            .map(|i| (0..n).map(|j| a[i][j] / (d[i] * d[j]).sqrt()).collect())
            .collect()
    }

    pub fn logits(
        n: usize,
        edges: &[(usize, usize)],
        x: &DenseMatrix,
        missing: &[Vec<bool>],
        p: &ModelParams,
    ) -> Vec<Vec<f64>> {
        let l = aggregation(n, edges);
        let l2: Vec<Vec<f64>> = l.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
        let g = p.gmm.as_ref().unwrap();
        let w0 = dense(&p.weights[0]);
        let w0_sq: Vec<Vec<f64>> = w0.iter().map(|r| r.iter().map(|v| v * v).collect()).collect();
        let logits_max = g.mix_logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = g.mix_logits.iter().map(|v| (v - logits_max).exp()).collect();
        let z: f64 = e.iter().sum();
        let d = x.cols();
        let h = w0[0].len();
        let mut h1 = vec![vec![0.0; h]; n];
        for k in 0..g.k() {
            let mk: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..d).map(|j| if missing[i][j] { g.means.get(k, j) } else { x.get(i, j) }).collect())
                .collect();
            let sk: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..d).map(|j| if missing[i][j] { g.log_vars.get(k, j).exp() } else { 0.0 }).collect())
                .collect();
            let m_hat = mm(&mm(&l, &mk), &w0);
            let s_hat = mm(&mm(&l2, &sk), &w0_sq);
            for i in 0..n {
                for c in 0..h {
                    h1[i][c] += e[k] / z * expected_act(p.activation, m_hat[i][c], s_hat[i][c]);
                }
            }
        }
        mm(&mm(&l, &h1), &dense(&p.weights[1]))
    }
}

#[test]
fn forward_matches_dense_oracle() {
    for (seed, act) in [(1u64, Activation::Relu), (2, Activation::LeakyRelu { alpha: 0.2 }), (3, Activation::Relu)] {
        let mut rng = rng_from_seed(seed);
        let (n, d, c, k) = (5, 3, 2, 2);
        let edges = vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)];
        let graph = Graph::new(n, edges.clone()).unwrap();
        let x = random_matrix(n, d, 1.0, &mut rng);
        let mask = generate_mask(
            &MaskSpec {
                pattern: MissingPattern::Uniform,
                mr: 0.4,
                seed,
            },
            n,
            d,
        )
        .unwrap();
        let missing: Vec<Vec<bool>> = (0..n).map(|i| (0..d).map(|j| mask.is_missing(i, j)).collect()).collect();
        let xf = apply_mask(&x, &mask).unwrap();
        let params = ModelParams {
            weights: vec![random_matrix(d, 4, 1.0, &mut rng), random_matrix(4, c, 1.0, &mut rng)],
            gmm: Some(
                GmmParams::new(
                    vec![0.3, -0.4],
                    random_matrix(k, d, 1.0, &mut rng),
                    random_matrix(k, d, 0.5, &mut rng),
                )
                .unwrap(),
            ),
            activation: act,
        };
        let got = forward(&params, &build_aggregation(&graph), &xf, None).unwrap();
        let want = oracle::logits(n, &edges, &x, &missing, &params);
        for i in 0..n {
            for j in 0..c {
                assert!(
                    (got.logits.get(i, j) - want[i][j]).abs() < 1e-9,
                    "seed {seed} ({i},{j}): {} vs {}",
                    got.logits.get(i, j),
                    want[i][j]
                );
            }
        }
    }
}
