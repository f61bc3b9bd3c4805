use rand::Rng as _;

use crate::activation::FirstLayerInput;
use crate::error::{Error, Result};
use crate::gmm::{em_fit_with, reconstructed_features, reconstruction_mae, EmOptions, GmmParams};
use crate::graph::{build_aggregation, Aggregation, Graph};
use crate::linalg::DenseMatrix;
use crate::mask::MaskedFeatures;
use crate::rng::{rng_from_seed, sub_seed, Rng};

use super::backward::backward_from;
use super::forward::{forward_prepared, DropoutMask};
use super::metrics::{cross_entropy, decay_penalty, evaluate_accuracy};
use super::optim::Adam;
use super::{Mode, ModelParams, RunResult, Split, TrainConfig};

/// Wall-clock timer; reads zero where the platform has no monotonic clock.
#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    #[cfg(not(target_arch = "wasm32"))]
    start: std::time::Instant,
}

impl Stopwatch {
    pub fn start() -> Self {
        Self {
            #[cfg(not(target_arch = "wasm32"))]
            start: std::time::Instant::now(),
        }
    }

    pub fn elapsed_s(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        {
            self.start.elapsed().as_secs_f64()
        }
        #[cfg(target_arch = "wasm32")]
        {
            0.0
        }
    }
}

/// Optional inputs that are not part of the configuration.
#[derive(Debug, Clone, Default)]
pub struct TrainExtras {
    /// Complete features, for the per-epoch reconstruction MAE.
    pub truth: Option<DenseMatrix>,
    /// Skip EM and start from these mixture parameters.
    pub init_gmm: Option<GmmParams>,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

fn check_inputs(n: usize, labels: &[usize], split: &Split) -> Result<usize> {
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!("{} labels for {n} nodes", labels.len())));
    }
    split.validate(n)?;
    if split.train.is_empty() {
        return Err(Error::EmptyIndex("train split"));
    }
    if split.val.is_empty() {
        return Err(Error::EmptyIndex("validation split"));
    }
    if split.test.is_empty() {
        return Err(Error::EmptyIndex("test split"));
    }
    Ok(labels.iter().copied().max().map_or(0, |m| m + 1))
}

pub fn train(
    graph: &Graph,
    xf: &MaskedFeatures,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig,
) -> Result<(ModelParams, RunResult)> {
    let agg = build_aggregation(graph);
    train_prepared(&agg, xf, labels, split, cfg, &TrainExtras::default())
}

/// [`train`] with a precomputed aggregation matrix and optional extras.
pub fn train_prepared(
    agg: &Aggregation,
    xf: &MaskedFeatures,
    labels: &[usize],
    split: &Split,
    cfg: &TrainConfig,
    extras: &TrainExtras,
) -> Result<(ModelParams, RunResult)> {
    let wall = Stopwatch::start();
    cfg.validate()?;
    let n = xf.rows();
    if agg.num_nodes() != n {
        return Err(Error::dims("train", (agg.num_nodes(), agg.num_nodes()), xf.x().shape()));
    }
    let classes = check_inputs(n, labels, split)?;
    if cfg.mode == Mode::PlainGcn && !xf.mask().is_empty() {
        return Err(Error::InvalidArgument(
            "plain GCN needs a complete or imputed feature matrix".into(),
        ));
    }

    // Separate streams so that a mixture model on complete data draws the
    // same initial weights and dropout masks as plain GCN.
    let mut init_rng = rng_from_seed(sub_seed(cfg.seed, "init"));
    let mut dropout_rng = rng_from_seed(sub_seed(cfg.seed, "dropout"));

    let mut dims = vec![xf.cols()];
    dims.extend(&cfg.hidden_dims);
    dims.push(classes);
    let weights = dims.windows(2).map(|w| glorot(w[0], w[1], &mut init_rng)).collect();

    let em_watch = Stopwatch::start();
    let gmm = match cfg.mode {
        Mode::PlainGcn => None,
        Mode::Joint | Mode::TwoStep => Some(match &extras.init_gmm {
            Some(g) => g.clone(),
            None => {
                let opts = EmOptions {
                    k: cfg.k,
                    max_iter: cfg.em_max_iter,
                    tol: cfg.em_tol,
                    seed: sub_seed(cfg.seed, "em"),
                    init: cfg.em_init,
                };
                let fit = em_fit_with(xf, &opts)?;
                for d in &fit.diagnostics {
                    log::warn!("EM: {d}");
                }
                fit.params
            }
        }),
    };
    let em_time_s = em_watch.elapsed_s();

    let mut params = ModelParams {
        weights,
        gmm,
        activation: cfg.activation,
    };
    params.validate()?;
    let frozen: Vec<bool> = {
        let n_slices = params.weights.len() + if params.gmm.is_some() { 3 } else { 0 };
        (0..n_slices)
            .map(|i| cfg.mode == Mode::TwoStep && i >= params.weights.len())
            .collect()
    };

    let recon_mae = |p: &ModelParams| -> Result<Option<f64>> {
        match (&extras.truth, &p.gmm) {
            (Some(truth), Some(g)) if !xf.mask().is_empty() => {
                Ok(Some(reconstruction_mae(&reconstructed_features(xf, g), truth, xf.mask())?))
            }
            _ => Ok(None),
        }
    };
    let initial_recon_mae = recon_mae(&params)?;

    let train_watch = Stopwatch::start();
    let input = FirstLayerInput::new(agg, xf)?;
    let mut adam = Adam::new(cfg.learning_rate);
    let mut loss_curve = Vec::new();
    let mut val_acc_curve = Vec::new();
    let mut recon_mae_curve = Vec::new();
    let mut best = (params.clone(), f64::NEG_INFINITY, f64::INFINITY, 0usize);
    let mut bad_epochs = 0;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.max_epochs {
        let dropout = (cfg.dropout > 0.0)
            .then(|| DropoutMask::sample(n, cfg.hidden_dims[0], cfg.dropout, &mut dropout_rng));
        let fwd = forward_prepared(&params, agg, &input, dropout.as_ref())?;
        let train_loss = cross_entropy(&fwd.logits, labels, &split.train)?
            + decay_penalty(&params, cfg.weight_decay, cfg.decay_all_weights);
        if !train_loss.is_finite() {
            log::error!("non-finite training loss at epoch {epoch}; aborting");
            return Err(Error::NonFiniteLoss { epoch });
        }
        let grads = backward_from(&params, agg, &input, &fwd, labels, &split.train, cfg)?;
        adam.step(params.slices_mut(), &grads.slices(), &frozen);
        if let Some(g) = &mut params.gmm {
            g.apply_variance_floor();
        }

        let eval = forward_prepared(&params, agg, &input, None)?;
        let val_acc = evaluate_accuracy(&eval.logits, labels, &split.val)?;
        let val_loss = cross_entropy(&eval.logits, labels, &split.val)?;
        loss_curve.push(train_loss);
        val_acc_curve.push(val_acc);
        if let Some(mae) = recon_mae(&params)? {
            recon_mae_curve.push(mae);
        }
        epochs_run = epoch;

        if val_acc > best.1 || (val_acc == best.1 && val_loss < best.2) {
            best = (params.clone(), val_acc, val_loss, epoch);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }
    let train_time_s = train_watch.elapsed_s();

    let (params, best_val_accuracy, _, epoch_of_best) = best;
    let eval = forward_prepared(&params, agg, &input, None)?;
    let test_accuracy = evaluate_accuracy(&eval.logits, labels, &split.test)?;
    Ok((
        params,
        RunResult {
            test_accuracy,
            best_val_accuracy,
            epoch_of_best,
            epochs_run,
            loss_curve,
            val_acc_curve,
            recon_mae_curve,
            initial_recon_mae,
            wall_time_s: wall.elapsed_s(),
            em_time_s,
            train_time_s,
        },
    ))
}
