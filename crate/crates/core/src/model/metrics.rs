use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

use super::ModelParams;

pub fn row_softmax(logits: &DenseMatrix) -> DenseMatrix {
    let mut out = logits.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

fn log_softmax_at(row: &[f64], class: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    row[class] - lse
}

/// Mean cross-entropy of `softmax(logits)` over `idx`.
pub fn cross_entropy(logits: &DenseMatrix, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex("cross-entropy"));
    }
    let total: f64 = idx.iter().map(|&i| -log_softmax_at(logits.row(i), labels[i])).sum();
    Ok(total / idx.len() as f64)
}

pub(crate) fn decay_penalty(params: &ModelParams, weight_decay: f64, all_weights: bool) -> f64 {
    let n = if all_weights { params.weights.len() } else { 1 };
    weight_decay * params.weights[..n].iter().map(DenseMatrix::sum_squares).sum::<f64>()
}

/// Mean cross-entropy over `train_idx` plus `weight_decay · ‖W⁽⁰⁾‖²`.
pub fn loss(
    logits: &DenseMatrix,
    labels: &[usize],
    train_idx: &[usize],
    params: &ModelParams,
    weight_decay: f64,
) -> Result<f64> {
    Ok(cross_entropy(logits, labels, train_idx)? + decay_penalty(params, weight_decay, false))
}

fn argmax(row: &[f64]) -> usize {
    // strict comparison keeps the lowest index on ties
    let mut best = 0;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best
}

/// Fraction of `idx` whose highest-scoring class equals the label.
/// Ties go to the lowest class index.
pub fn evaluate_accuracy(logits: &DenseMatrix, labels: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex("accuracy"));
    }
    let correct = idx.iter().filter(|&&i| argmax(logits.row(i)) == labels[i]).count();
    Ok(correct as f64 / idx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activation::Activation;

    fn m(rows: &[Vec<f64>]) -> DenseMatrix {
        DenseMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = row_softmax(&m(&[vec![1.0, 2.0, 3.0], vec![-1000.0, 0.0, 1000.0]]));
        for i in 0..2 {
            assert!((p.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(row_softmax(&DenseMatrix::zeros(1, 4)).row(0), &[0.25; 4]);
    }

    #[test]
    fn cross_entropy_cases() {
        let confident = m(&[vec![100.0, -100.0], vec![-100.0, 100.0]]);
        assert!(cross_entropy(&confident, &[0, 1], &[0, 1]).unwrap() < 1e-80);
        let uniform = DenseMatrix::zeros(2, 2);
        assert!((cross_entropy(&uniform, &[0, 1], &[0, 1]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(matches!(cross_entropy(&uniform, &[0, 1], &[]), Err(Error::EmptyIndex(_))));

        let logits = m(&[vec![0.3, -1.2, 2.0], vec![1.5, 0.0, -0.5], vec![0.0, 0.1, 0.2]]);
        let labels = [2, 0, 1];
        let mut want = 0.0;
        for &i in &[0usize, 2] {
            let z: f64 = logits.row(i).iter().map(|v| v.exp()).sum();
            want -= (logits.get(i, labels[i]).exp() / z).ln();
        }
        want /= 2.0;
        assert!((cross_entropy(&logits, &labels, &[0, 2]).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn loss_adds_first_layer_decay() {
        let params = ModelParams {
            weights: vec![m(&[vec![1.0, 2.0]]), m(&[vec![3.0], vec![4.0]])],
            gmm: None,
            activation: Activation::Relu,
        };
        let logits = DenseMatrix::zeros(1, 2);
        let l = loss(&logits, &[0], &[0], &params, 0.1).unwrap();
        assert!((l - (2f64.ln() + 0.5)).abs() < 1e-15);
        assert!((decay_penalty(&params, 0.1, true) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_cases() {
        let logits = m(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 1.0], vec![0.5, 0.5]]);
        assert_eq!(evaluate_accuracy(&logits, &[0, 1, 0, 0], &[0, 1, 2, 3]).unwrap(), 1.0);
        assert_eq!(evaluate_accuracy(&logits, &[1, 0, 1, 1], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert_eq!(evaluate_accuracy(&logits, &[0, 1, 1, 1], &[0, 1, 2, 3]).unwrap(), 0.5);
        assert!(evaluate_accuracy(&logits, &[0, 1, 1, 1], &[]).is_err());
    }
}
