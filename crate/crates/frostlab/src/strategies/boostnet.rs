//! One-step gradient boosting of a frozen base classifier.
//!
//! The booster regresses, with MSE, onto the base model's residuals
//! `y − p` (labels minus softmax probabilities). Ensemble inference adds
//! the booster's raw output to the base model's softmax output, so a
//! perfectly fitted booster steers the combined score toward the label
//! while a zero booster leaves the base predictions untouched.

use std::collections::BTreeMap;

use crate::autograd::{Graph, Mode};
use crate::data::protocol::Batch;
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::loss::{self, softmax_probs, OneHot};
use crate::data::protocol::BatchStream;
use crate::nn::Model;
use crate::tensor::{NodeId, Tensor};
use crate::train::{batch_ranges, slice_images, train, TrainConfig, TrainOutcome, Trainable};

/// Ensemble scores: base softmax output plus booster output, elementwise.
pub fn boostnet_infer(base: &Model, booster: &Model, images: &Tensor) -> Result<Tensor> {
    if base.num_classes != booster.num_classes {
        return Err(Error::Contract(format!(
            "ensemble width mismatch: base {} vs booster {}",
            base.num_classes, booster.num_classes
        )));
    }
    let base_logits = base.forward(images, Mode::Eval)?;
    let probs = softmax_probs(&base_logits);
    let correction = booster.forward(images, Mode::Eval)?;
    let mut data = probs.into_data();
    for (d, &c) in data.iter_mut().zip(correction.data()) {
        *d += c;
    }
    Tensor::new(vec![images.shape()[0], base.num_classes], data)
}

/// Residual targets of the frozen base for one batch.
pub fn residual_targets(base: &Model, batch: &Batch) -> Result<Tensor> {
    let logits = base.forward(&batch.images, Mode::Eval)?;
    let probs = softmax_probs(&logits);
    let y = OneHot::new(batch.label_indices(), base.num_classes)?;
    loss::residuals(&y, &probs)
}

/// Booster training state: the base stays frozen throughout.
pub struct BoostedEnsemble {
    pub base: Model,
    pub booster: Model,
}

impl BoostedEnsemble {
    pub fn new(base: Model, booster: Model) -> Result<Self> {
        if base.num_classes != booster.num_classes {
            return Err(Error::Contract(format!(
                "ensemble width mismatch: base {} vs booster {}",
                base.num_classes, booster.num_classes
            )));
        }
        Ok(Self { base, booster })
    }
}

impl Trainable for BoostedEnsemble {
    fn step(&mut self, g: &mut Graph, batch: &Batch) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let targets = residual_targets(&self.base, batch)?;
        let x = g.constant(&batch.images)?;
        let (out, bindings) = self.booster.forward_graph(g, x, Mode::Train)?;
        let loss = g.mse(out, &targets)?;
        Ok((loss, bindings))
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.booster.named_params_mut()
    }

    fn eval_scores(&self, images: &Tensor) -> Result<Tensor> {
        boostnet_infer(&self.base, &self.booster, images)
    }

    fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.booster.state()
    }

    fn restore(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()> {
        self.booster.load_state(state)
    }

    /// Accuracy from ensemble scores; loss is the booster's own objective
    /// (MSE against the base residuals).
    fn validate(&self, val: &LabeledSet, batch_size: usize) -> Result<(f64, f64)> {
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        for (start, end) in batch_ranges(val.len(), batch_size) {
            let images = slice_images(val, start, end);
            let labels: Vec<usize> = val.labels[start..end].iter().map(|&l| l as usize).collect();
            let scores = self.eval_scores(&images)?;
            let preds = loss::argmax_rows(&scores);
            correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();

            let base_logits = self.base.forward(&images, Mode::Eval)?;
            let probs = softmax_probs(&base_logits);
            let y = OneHot::new(labels, self.base.num_classes)?;
            let targets = loss::residuals(&y, &probs)?;
            let out = self.booster.forward(&images, Mode::Eval)?;
            loss_sum += loss::mse(&out, &targets)? as f64 * (end - start) as f64;
        }
        Ok((
            correct as f64 / val.len() as f64,
            loss_sum / val.len() as f64,
        ))
    }
}

/// Train a fresh booster on the frozen base's residuals; validation
/// accuracy is scored through ensemble inference. Returns the
/// best-validation booster.
pub fn boostnet_fit<B: BatchStream>(
    base: Model,
    booster: Model,
    stream: &B,
    val: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(BoostedEnsemble, TrainOutcome)> {
    let mut ensemble = BoostedEnsemble::new(base, booster)?;
    let outcome = train(&mut ensemble, stream, val, cfg)?;
    Ok((ensemble, outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_lenet, InputSpec};
    use crate::rng::SeededRng;

    fn batch(n: usize, seed: u64) -> Batch {
        let mut rng = SeededRng::from_seed(seed);
        let data: Vec<f32> = (0..n * 1024).map(|_| rng.range_f32(0.0, 1.0)).collect();
        Batch {
            images: Tensor::new(vec![n, 1, 32, 32], data).unwrap(),
            labels: (0..n).map(|i| (i % 10) as u8).collect(),
        }
    }

    #[test]
    fn zero_booster_preserves_base_predictions() {
        let base = build_lenet(InputSpec::new(1, 28, 28), 10, 1).unwrap();
        let mut booster = build_lenet(InputSpec::new(1, 28, 28), 10, 2).unwrap();
        for (_, t) in booster.named_params_mut() {
            *t = Tensor::zeros(t.shape().to_vec());
        }
        let b = batch(5, 3);
        let base_logits = base.forward(&b.images, Mode::Eval).unwrap();
        let ensemble = boostnet_infer(&base, &booster, &b.images).unwrap();
        assert_eq!(
            loss::argmax_rows(&base_logits),
            loss::argmax_rows(&ensemble)
        );
        // scores equal the base softmax exactly
        assert_eq!(ensemble.data(), softmax_probs(&base_logits).data());
    }

    #[test]
    fn exact_residual_booster_recovers_labels() {
        // constructed case: if the booster outputs exactly y − p, the
        // ensemble argmax lands on the true label
        let base = build_lenet(InputSpec::new(1, 28, 28), 10, 4).unwrap();
        let b = batch(6, 5);
        let targets = residual_targets(&base, &b).unwrap();
        let logits = base.forward(&b.images, Mode::Eval).unwrap();
        let mut scores = softmax_probs(&logits).into_data();
        for (s, &r) in scores.iter_mut().zip(targets.data()) {
            *s += r;
        }
        let scores = Tensor::new(vec![6, 10], scores).unwrap();
        let preds = loss::argmax_rows(&scores);
        let labels: Vec<usize> = b.label_indices();
        assert_eq!(preds, labels);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let base = build_lenet(InputSpec::new(1, 28, 28), 10, 1).unwrap();
        let booster = build_lenet(InputSpec::new(1, 28, 28), 5, 2).unwrap();
        let b = batch(2, 7);
        assert!(boostnet_infer(&base, &booster, &b.images).is_err());
    }

    #[test]
    fn perfect_base_yields_zero_targets_for_zero_booster() {
        // if p == y exactly the residual target is zero, and a zero-output
        // booster reaches zero MSE
        let y = OneHot::new(vec![1, 0], 2).unwrap();
        let p = y.dense::<f32>();
        let r = loss::residuals(&y, &p).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.0));
        let zero_out = Tensor::zeros(vec![2, 2]);
        assert_eq!(loss::mse(&zero_out, &r).unwrap(), 0.0);
    }

    #[test]
    fn booster_output_width_matches_classes() {
        let base = build_lenet(InputSpec::new(1, 28, 28), 10, 1).unwrap();
        let booster = build_lenet(InputSpec::new(1, 28, 28), 10, 9).unwrap();
        let b = batch(3, 11);
        let out = booster.forward(&b.images, Mode::Eval).unwrap();
        assert_eq!(out.shape(), &[3, 10]);
        let ens = boostnet_infer(&base, &booster, &b.images).unwrap();
        assert_eq!(ens.shape(), &[3, 10]);
    }
}
