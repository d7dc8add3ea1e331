//! Softmax cross-entropy, residual targets, MSE, and accuracy.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::TensorT;

/// Integer labels with their dense one-hot form.
#[derive(Clone, Debug)]
pub struct OneHot {
    labels: Vec<usize>,
    num_classes: usize,
}

impl OneHot {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Label {
                label: bad,
                num_classes,
            });
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Dense `[N, K]` form with exactly one 1 per row.
    pub fn dense<S: Scalar>(&self) -> TensorT<S> {
        let (n, k) = (self.labels.len(), self.num_classes);
        let mut data = vec![S::ZERO; n * k];
        for (row, &l) in self.labels.iter().enumerate() {
            data[row * k + l] = S::ONE;
        }
        TensorT::new(vec![n, k], data).expect("one-hot tensor is well-formed")
    }
}

/// Row-normalized probabilities and mean cross-entropy of `logits` against
/// integer labels, outside any graph.
pub fn softmax_cross_entropy<S: Scalar>(
    logits: &TensorT<S>,
    y: &OneHot,
) -> Result<(S, TensorT<S>)> {
    let mut g = crate::autograd::GraphT::<S>::new();
    let z = g.constant(logits)?;
    if logits.shape().len() == 2 && logits.shape()[1] != y.num_classes() {
        return Err(Error::Contract(format!(
            "logit width {} vs {} classes",
            logits.shape()[1],
            y.num_classes()
        )));
    }
    let (loss, probs) = g.softmax_cross_entropy(z, y.labels())?;
    Ok((g.value(loss)[0], probs))
}

/// Per-element residual `y − p`; the amount the current probabilities
/// miss the labels by. No batch normalization factor is applied.
pub fn residuals<S: Scalar>(y: &OneHot, probs: &TensorT<S>) -> Result<TensorT<S>> {
    let (n, k) = (y.len(), y.num_classes());
    if probs.shape() != [n, k] {
        return Err(Error::Dimension {
            op: "residuals",
            lhs: probs.shape().to_vec(),
            rhs: vec![n, k],
        });
    }
    for row in 0..n {
        let sum: f64 = probs.data()[row * k..(row + 1) * k]
            .iter()
            .map(|v| v.to_f64())
            .sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(Error::Contract(format!(
                "probability row {row} sums to {sum}, not 1"
            )));
        }
    }
    let mut data = probs.data().to_vec();
    for (row, &l) in y.labels().iter().enumerate() {
        for (j, v) in data[row * k..(row + 1) * k].iter_mut().enumerate() {
            let target = if j == l { S::ONE } else { S::ZERO };
            *v = target - *v;
        }
    }
    TensorT::new(vec![n, k], data)
}

/// Mean of squared differences over every element.
pub fn mse<S: Scalar>(pred: &TensorT<S>, target: &TensorT<S>) -> Result<S> {
    if pred.shape() != target.shape() {
        return Err(Error::Dimension {
            op: "mse",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let acc: f64 = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = (p - t).to_f64();
            d * d
        })
        .sum();
    Ok(S::from_f64(acc / pred.numel() as f64))
}

/// Max-shifted softmax over each row of `[N, K]` logits.
pub fn softmax_probs<S: Scalar>(logits: &TensorT<S>) -> TensorT<S> {
    let shape = logits.shape();
    debug_assert_eq!(shape.len(), 2);
    let (n, k) = (shape[0], shape[1]);
    let mut out = vec![S::ZERO; n * k];
    for row in 0..n {
        let z = &logits.data()[row * k..(row + 1) * k];
        let m = z.iter().fold(z[0], |acc, &v| acc.maxv(v));
        let mut sum = 0.0f64;
        for &v in z {
            sum += (v - m).to_f64().exp();
        }
        let inv = S::from_f64(1.0 / sum);
        for (j, &v) in z.iter().enumerate() {
            out[row * k + j] = (v - m).exp() * inv;
        }
    }
    TensorT::new(vec![n, k], out).expect("softmax output is well-formed")
}

/// Row argmax with ties broken toward the lowest index.
pub fn argmax_rows<S: Scalar>(scores: &TensorT<S>) -> Vec<usize> {
    let shape = scores.shape();
    debug_assert_eq!(shape.len(), 2);
    let (n, k) = (shape[0], shape[1]);
    let mut out = Vec::with_capacity(n);
    for row in 0..n {
        let r = &scores.data()[row * k..(row + 1) * k];
        let mut best = 0usize;
        for (j, &v) in r.iter().enumerate().skip(1) {
            if v > r[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<S: Scalar>(scores: &TensorT<S>, labels: &[usize]) -> Result<f64> {
    let shape = scores.shape();
    if shape.len() != 2 || shape[0] != labels.len() || labels.is_empty() {
        return Err(Error::Contract(format!(
            "accuracy over scores {:?} and {} labels",
            shape,
            labels.len()
        )));
    }
    let preds = argmax_rows(scores);
    let correct = preds
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
