use rand::Rng as _;

use crate::activation::{
    expected_activation_forward, layer_moments_prepared, ExpectedActivation, FirstLayerInput,
};
use crate::error::{Error, Result};
use crate::graph::Aggregation;
use crate::linalg::DenseMatrix;
use crate::mask::MaskedFeatures;
use crate::rng::Rng;

use super::metrics::row_softmax;
use super::ModelParams;

/// Inverted-dropout scale factors for the first hidden layer: each entry is
/// either 0 or `1/(1-p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    scale: DenseMatrix,
}

impl DropoutMask {
    pub fn sample(rows: usize, cols: usize, rate: f64, rng: &mut Rng) -> Self {
        let keep = 1.0 / (1.0 - rate);
        let scale = DenseMatrix::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        Self { scale }
    }

    pub fn from_scale(scale: DenseMatrix) -> Self {
        Self { scale }
    }

    pub fn scale(&self) -> &DenseMatrix {
        &self.scale
    }
}

#[derive(Debug, Clone)]
pub(crate) enum FirstLayer {
    Mixture {
        act: ExpectedActivation,
        mix_weights: Vec<f64>,
    },
    Plain {
        pre: DenseMatrix,
    },
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub(crate) first: FirstLayer,
    pub(crate) dropout: Option<DenseMatrix>,
    /// `L·H` feeding each layer after the first.
    pub(crate) aggregated: Vec<DenseMatrix>,
    /// Pre-activations of hidden layers after the first.
    pub(crate) hidden_pre: Vec<DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct Forward {
    /// Class scores before the softmax.
    pub logits: DenseMatrix,
    /// Row-wise softmax of `logits`.
    pub probs: DenseMatrix,
    pub cache: ForwardCache,
}

pub fn forward(
    params: &ModelParams,
    agg: &Aggregation,
    xf: &MaskedFeatures,
    dropout: Option<&DropoutMask>,
) -> Result<Forward> {
    if agg.num_nodes() != xf.rows() {
        return Err(Error::dims(
            "forward",
            (agg.num_nodes(), agg.num_nodes()),
            (xf.rows(), xf.cols()),
        ));
    }
    let input = FirstLayerInput::new(agg, xf)?;
    forward_prepared(params, agg, &input, dropout)
}

pub(crate) fn forward_prepared(
    params: &ModelParams,
    agg: &Aggregation,
    input: &FirstLayerInput,
    dropout: Option<&DropoutMask>,
) -> Result<Forward> {
    params.validate()?;
    let w0 = &params.weights[0];
    let (first, h1) = match &params.gmm {
        Some(gmm) => {
            let moments = layer_moments_prepared(agg, input, gmm, w0)?;
            let mix_weights = gmm.weights();
            let act = expected_activation_forward(&moments, &mix_weights, params.activation);
            let h1 = act.output.clone();
            (
                FirstLayer::Mixture {
                    act,
                    mix_weights,
                },
                h1,
            )
        }
        None => {
            if input.has_missing() {
                return Err(Error::InvalidArgument(
                    "plain GCN needs a complete or imputed feature matrix".into(),
                ));
            }
            let pre = input.lx.matmul(w0)?;
            let h1 = pre.map(|v| params.activation.apply(v));
            (FirstLayer::Plain { pre }, h1)
        }
    };

    let mut h = h1;
    let dropout = match dropout {
        Some(mask) => {
            if mask.scale().shape() != h.shape() {
                return Err(Error::dims("dropout", mask.scale().shape(), h.shape()));
            }
            h = h.hadamard(mask.scale())?;
            Some(mask.scale().clone())
        }
        None => None,
    };

    let n_layers = params.weights.len();
    let mut aggregated = Vec::with_capacity(n_layers.saturating_sub(1));
    let mut hidden_pre = Vec::new();
    for (l, w) in params.weights.iter().enumerate().skip(1) {
        let lh = agg.matrix().spmm(&h)?;
        let pre = lh.matmul(w)?;
        aggregated.push(lh);
        if l + 1 < n_layers {
            h = pre.map(|v| params.activation.apply(v));
            hidden_pre.push(pre);
        } else {
            h = pre;
        }
    }
    // A single-layer model scores classes directly from the first layer.
    let logits = h;
    let probs = row_softmax(&logits);
    Ok(Forward {
        logits,
        probs,
        cache: ForwardCache {
            first,
            dropout,
            aggregated,
            hidden_pre,
        },
    })
}
