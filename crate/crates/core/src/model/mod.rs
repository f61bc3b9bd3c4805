//! GCN with an expected-activation first layer over a Gaussian-mixture
//! representation of missing features, plus the plain-GCN and two-step variants.

mod backward;
mod forward;
mod metrics;
mod optim;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use backward::{backward, Gradients};
pub use forward::{forward, DropoutMask, Forward, ForwardCache};
pub use metrics::{cross_entropy, evaluate_accuracy, loss, row_softmax};
pub use optim::Adam;
pub use train::{train, train_prepared, Stopwatch, TrainExtras};

use crate::activation::Activation;
use crate::error::{Error, Result};
use crate::gmm::{EmInit, GmmParams};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// GMM and network weights updated together.
    Joint,
    /// GMM fixed after EM; only network weights trained.
    TwoStep,
    /// Ordinary GCN on a complete feature matrix.
    PlainGcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden_dims: Vec<usize>,
    pub k: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Apply weight decay to every weight matrix instead of the first only.
    pub decay_all_weights: bool,
    pub dropout: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub mode: Mode,
    pub activation: Activation,
    pub em_init: EmInit,
    pub em_max_iter: usize,
    pub em_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![16],
            k: 5,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            decay_all_weights: false,
            dropout: 0.5,
            max_epochs: 1000,
            patience: 100,
            seed: 0,
            mode: Mode::Joint,
            activation: Activation::Relu,
            em_init: EmInit::Marginal,
            em_max_iter: 100,
            em_tol: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        if self.hidden_dims.is_empty() || self.hidden_dims.contains(&0) {
            return Err(Error::InvalidArgument("hidden_dims must be non-empty and positive".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(Error::InvalidArgument("learning rate must be > 0 and weight decay >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// `W⁽⁰⁾ … W⁽ᴸ⁻¹⁾`; the first maps features to the first hidden layer,
    /// the last maps to class scores.
    pub weights: Vec<DenseMatrix>,
    /// Present for the mixture first layer; `None` for plain GCN.
    pub gmm: Option<GmmParams>,
    pub activation: Activation,
}

impl ModelParams {
    pub fn num_classes(&self) -> usize {
        self.weights.last().map_or(0, DenseMatrix::cols)
    }

    pub fn input_dim(&self) -> usize {
        self.weights.first().map_or(0, DenseMatrix::rows)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidArgument("model needs at least one weight matrix".into()));
        }
        for pair in self.weights.windows(2) {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::dims("ModelParams", pair[0].shape(), pair[1].shape()));
            }
        }
        if let Some(g) = &self.gmm {
            if g.dim() != self.input_dim() {
                return Err(Error::dims("ModelParams", (g.k(), g.dim()), self.weights[0].shape()));
            }
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        Ok(())
    }

    /// Mutable views of every trainable array in a fixed order:
    /// weights, then mixing logits, means and log-variances.
    pub(crate) fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.weights.iter_mut().map(|w| w.data_mut()).collect();
        if let Some(g) = &mut self.gmm {
            out.push(&mut g.mix_logits);
            out.push(g.means.data_mut());
            out.push(g.log_vars.data_mut());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Checks bounds and pairwise disjointness.
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner = vec![0u8; n];
        for (tag, idx) in [(1u8, &self.train), (2, &self.val), (3, &self.test)] {
            for &i in idx {
                if i >= n {
                    return Err(Error::InvalidArgument(format!("split index {i} >= {n}")));
                }
                if owner[i] != 0 {
                    return Err(if (owner[i], tag) == (1, 2) {
                        Error::SplitOverlap(i)
                    } else {
                        Error::InvalidArgument(format!("node {i} appears in more than one split"))
                    });
                }
                owner[i] = tag;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub test_accuracy: f64,
    pub best_val_accuracy: f64,
    /// 1-based epoch whose parameters were kept.
    pub epoch_of_best: usize,
    pub epochs_run: usize,
    pub loss_curve: Vec<f64>,
    pub val_acc_curve: Vec<f64>,
    /// Reconstruction MAE after each epoch; empty without ground truth or mixture.
    pub recon_mae_curve: Vec<f64>,
    /// Reconstruction MAE of the EM initialization, before any gradient step.
    pub initial_recon_mae: Option<f64>,
    pub wall_time_s: f64,
    pub em_time_s: f64,
    pub train_time_s: f64,
}

impl RunResult {
    /// Per-epoch curves as CSV: `epoch,train_loss,val_acc,recon_mae`.
    pub fn write_curves<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["epoch", "train_loss", "val_acc", "recon_mae"])?;
        for e in 0..self.loss_curve.len() {
            let mae = self.recon_mae_curve.get(e).map_or(String::new(), |v| v.to_string());
            wtr.write_record([
                (e + 1).to_string(),
                self.loss_curve[e].to_string(),
                self.val_acc_curve[e].to_string(),
                mae,
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub const MODEL_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl ModelCheckpoint {
    pub fn new(config: TrainConfig, params: ModelParams) -> Self {
        Self {
            version: MODEL_CHECKPOINT_VERSION,
            config,
            params,
        }
    }

    pub fn to_writer<W: std::io::Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer(w, self)?;
        Ok(())
    }

    pub fn from_reader<R: std::io::Read>(r: R) -> Result<Self> {
        let ck: ModelCheckpoint = serde_json::from_reader(r)?;
        if ck.version != MODEL_CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: ck.version,
                expected: MODEL_CHECKPOINT_VERSION,
            });
        }
        ck.params.validate()?;
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_writer(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|_| Error::MissingFile(path.to_path_buf()))?;
        Self::from_reader(std::io::BufReader::new(f))
    }
}
