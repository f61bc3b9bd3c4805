//! Baselines that fill missing features before a plain GCN.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mask::MaskedFeatures;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeMethod {
    Mean(MeanAxis),
    Knn { k: usize },
}

impl fmt::Display for ImputeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Mean(axis) => write!(f, "mean({axis})"),
            Self::Knn { k } => write!(f, "knn(k={k})"),
        }
    }
}

/// Which observed entries average into a missing one.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanAxis {
    /// Mean of the node's own observed features.
    #[default]
    Row,
    /// Mean of the feature over nodes that observe it.
    Column,
}

impl fmt::Display for MeanAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Row => "row",
            Self::Column => "column",
        })
    }
}

impl FromStr for MeanAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "row" => Ok(Self::Row),
            "column" | "col" => Ok(Self::Column),
            other => Err(Error::InvalidArgument(format!("unknown mean axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputedFeatures {
    pub x_hat: DenseMatrix,
    pub method: ImputeMethod,
}

impl ImputedFeatures {
    /// The filled matrix as complete features for plain-GCN training.
    pub fn into_features(self) -> MaskedFeatures {
        MaskedFeatures::complete(self.x_hat)
    }
}

fn global_observed_mean(xf: &MaskedFeatures) -> Result<f64> {
    let (sum, count) = observed(xf).fold((0.0, 0usize), |(s, c), (_, _, v)| (s + v, c + 1));
    if count == 0 {
        return Err(Error::NoObservedEntries);
    }
    Ok(sum / count as f64)
}

fn observed(xf: &MaskedFeatures) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let (n, d) = (xf.rows(), xf.cols());
    (0..n).flat_map(move |i| (0..d).filter(move |&j| !xf.mask().is_missing(i, j)).map(move |j| (i, j, xf.x().get(i, j))))
}

/// Missing entries take the observed mean along `axis`; a row or column with
/// nothing observed falls back to the global observed mean.
pub fn impute_mean_axis(xf: &MaskedFeatures, axis: MeanAxis) -> Result<ImputedFeatures> {
    let method = ImputeMethod::Mean(axis);
    if xf.mask().is_empty() {
        return Ok(ImputedFeatures {
            x_hat: xf.x().clone(),
            method,
        });
    }
    let global = global_observed_mean(xf)?;
    let len = match axis {
        MeanAxis::Row => xf.rows(),
        MeanAxis::Column => xf.cols(),
    };
    let mut sums = vec![0.0; len];
    let mut counts = vec![0usize; len];
    for (i, j, v) in observed(xf) {
        let a = if axis == MeanAxis::Row { i } else { j };
        sums[a] += v;
        counts[a] += 1;
    }
    let means: Vec<f64> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { global } else { s / c as f64 })
        .collect();
    let mask = xf.mask();
    let x_hat = DenseMatrix::from_fn(xf.rows(), xf.cols(), |i, j| {
        if mask.is_missing(i, j) {
            means[if axis == MeanAxis::Row { i } else { j }]
        } else {
            xf.x().get(i, j)
        }
    });
    Ok(ImputedFeatures { x_hat, method })
}

/// Row-mean imputation.
pub fn impute_mean(xf: &MaskedFeatures) -> Result<ImputedFeatures> {
    impute_mean_axis(xf, MeanAxis::Row)
}

/// Root-mean-square difference over co-observed coordinates; `None` when the
/// rows share no observed coordinate.
fn co_observed_distance(xf: &MaskedFeatures, a: usize, b: usize) -> Option<f64> {
    let mask = xf.mask();
    let (ra, rb) = (xf.x().row(a), xf.x().row(b));
    let mut sum = 0.0;
    let mut count = 0usize;
    for j in 0..xf.cols() {
        if !mask.is_missing(a, j) && !mask.is_missing(b, j) {
            let diff = ra[j] - rb[j];
            sum += diff * diff;
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// K-nearest-neighbour imputation. Rows are compared on co-observed
/// coordinates only; each missing `(i, j)` becomes the mean of feature `j`
/// over the `k` nearest rows that observe it, ties going to the lower row
/// index. Entries with no such neighbour fall back to the row mean.
pub fn impute_knn(xf: &MaskedFeatures, k: usize) -> Result<ImputedFeatures> {
    if k == 0 {
        return Err(Error::InvalidArgument("k-NN imputation needs k >= 1".into()));
    }
    let method = ImputeMethod::Knn { k };
    if xf.mask().is_empty() {
        return Ok(ImputedFeatures {
            x_hat: xf.x().clone(),
            method,
        });
    }
    let fallback = impute_mean(xf)?.x_hat;
    let mask = xf.mask();
    let (n, d) = (xf.rows(), xf.cols());

    let fill_row = |i: usize| -> Vec<f64> {
        let mut row = xf.x().row(i).to_vec();
        let missing: Vec<usize> = (0..d).filter(|&j| mask.is_missing(i, j)).collect();
        if missing.is_empty() {
            return row;
        }
        let mut candidates: Vec<(f64, usize)> = (0..n)
            .filter(|&r| r != i)
            .filter_map(|r| co_observed_distance(xf, i, r).map(|dist| (dist, r)))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for j in missing {
            let mut sum = 0.0;
            let mut used = 0usize;
            for &(_, r) in &candidates {
                if used == k {
                    break;
                }
                if !mask.is_missing(r, j) {
                    sum += xf.x().get(r, j);
                    used += 1;
                }
            }
            row[j] = if used == 0 { fallback.get(i, j) } else { sum / used as f64 };
        }
        row
    };

    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(fill_row).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = (0..n).map(fill_row).collect();

    Ok(ImputedFeatures {
        x_hat: DenseMatrix::new(n, d, rows.concat())?,
        method,
    })
}
