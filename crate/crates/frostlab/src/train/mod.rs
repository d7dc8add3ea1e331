//! Optimization loop: per-batch steps, validation-driven checkpoint
//! selection, and early stopping.

pub mod checkpoint;
pub mod optim;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Mode};
use crate::data::protocol::{Batch, BatchStream};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::tensor::{NodeId, Tensor};

pub use checkpoint::Checkpoint;
pub use optim::{Optimizer, OptimizerKind};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 50,
            patience: 10,
            batch_size: 128,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.optimizer.lr() <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

/// Anything the loop can optimize: builds a per-batch loss on a graph,
/// exposes its trainable tensors, scores batches for validation, and can
/// snapshot/restore its state.
pub trait Trainable {
    /// Record one training step; returns the scalar loss node and the
    /// trainable (name, node) bindings of this pass.
    fn step(&mut self, g: &mut Graph, batch: &Batch) -> Result<(NodeId, Vec<(String, NodeId)>)>;

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    /// Class scores for a batch of images under eval-mode statistics.
    fn eval_scores(&self, images: &Tensor) -> Result<Tensor>;

    fn snapshot(&self) -> BTreeMap<String, Tensor>;

    fn restore(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()>;

    /// Validation accuracy and loss. The default scores every batch and
    /// measures softmax cross-entropy; strategies with another objective
    /// override this.
    fn validate(&self, val: &LabeledSet, batch_size: usize) -> Result<(f64, f64)> {
        let mut correct = 0usize;
        let mut loss_sum = 0.0f64;
        for (start, end) in batch_ranges(val.len(), batch_size) {
            let images = slice_images(val, start, end);
            let scores = self.eval_scores(&images)?;
            let labels: Vec<usize> = val.labels[start..end].iter().map(|&l| l as usize).collect();
            let preds = crate::loss::argmax_rows(&scores);
            correct += preds.iter().zip(&labels).filter(|(p, l)| p == l).count();
            let y = crate::loss::OneHot::new(labels, scores.shape()[1])?;
            let (l, _) = crate::loss::softmax_cross_entropy(&scores, &y)?;
            loss_sum += l as f64 * (end - start) as f64;
        }
        Ok((
            correct as f64 / val.len() as f64,
            loss_sum / val.len() as f64,
        ))
    }
}

/// Consecutive `[start, end)` ranges covering `n` items.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + batch_size).min(n);
        out.push((start, end));
        start = end;
    }
    out
}

/// Copy a contiguous sample range into a batch tensor.
pub fn slice_images(set: &LabeledSet, start: usize, end: usize) -> Tensor {
    let (c, h, w) = set.sample_shape();
    let stride = c * h * w;
    Tensor::new(
        vec![end - start, c, h, w],
        set.images.data()[start * stride..end * stride].to_vec(),
    )
    .expect("image slice is well-formed")
}

/// Accuracy of a scoring function over a whole set; returns
/// (accuracy, correct, total).
pub fn eval_accuracy<F>(scores: F, set: &LabeledSet, batch_size: usize) -> Result<(f64, usize, usize)>
where
    F: Fn(&Tensor) -> Result<Tensor>,
{
    let mut correct = 0usize;
    for (start, end) in batch_ranges(set.len(), batch_size) {
        let images = slice_images(set, start, end);
        let s = scores(&images)?;
        let preds = crate::loss::argmax_rows(&s);
        correct += preds
            .iter()
            .zip(&set.labels[start..end])
            .filter(|(p, l)| **p == **l as usize)
            .count();
    }
    Ok((correct as f64 / set.len() as f64, correct, set.len()))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub best_state: BTreeMap<String, Tensor>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub epochs_run: usize,
    pub history: Vec<EpochRecord>,
}

/// Run the full loop: one optimizer step per batch, validation per epoch,
/// best checkpoint by (accuracy desc, loss asc), stop after `patience`
/// epochs without improvement. The trainable is left holding the best
/// state.
pub fn train<T: Trainable, B: BatchStream>(
    trainable: &mut T,
    stream: &B,
    val: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut opt = Optimizer::new(cfg.optimizer);
    let mut best: Option<(f64, f64, BTreeMap<String, Tensor>, usize)> = None;
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();
    let mut epochs_run = 0usize;

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let started = Instant::now();
        let mut loss_sum = 0.0f64;
        let n_batches = stream.num_batches();
        for bi in 0..n_batches {
            let batch = stream.batch(epoch, bi);
            let mut g = Graph::new();
            let (loss, bindings) = trainable.step(&mut g, &batch)?;
            let loss_value = g.value(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: bi,
                });
            }
            loss_sum += loss_value as f64;
            g.backward(loss)?;
            let grads: Vec<(String, Vec<f32>)> = bindings
                .iter()
                .filter_map(|(name, id)| g.grad(*id).map(|gr| (name.clone(), gr.to_vec())))
                .collect();
            drop(g);
            let mut params: BTreeMap<String, &mut Tensor> =
                trainable.params_mut().into_iter().collect();
            for (name, grad) in &grads {
                let param = params.get_mut(name).ok_or_else(|| {
                    Error::Contract(format!("gradient for unknown parameter {name}"))
                })?;
                opt.step(name, param, grad)?;
            }
        }
        let train_loss = loss_sum / n_batches.max(1) as f64;
        let (val_acc, val_loss) = trainable.validate(val, cfg.batch_size)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
            seconds: started.elapsed().as_secs_f64(),
        });

        let improved = match &best {
            None => true,
            Some((ba, bl, _, _)) => val_acc > *ba || (val_acc == *ba && val_loss < *bl),
        };
        if improved {
            best = Some((val_acc, val_loss, trainable.snapshot(), epoch));
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= cfg.patience {
                break;
            }
        }
    }

    let (best_val_acc, best_val_loss, best_state, best_epoch) =
        best.expect("at least one epoch ran");
    trainable.restore(&best_state)?;
    Ok(TrainOutcome {
        best_state,
        best_epoch,
        best_val_acc,
        best_val_loss,
        epochs_run,
        history,
    })
}

/// Plain supervised classification over a model.
pub struct SupervisedModel {
    pub model: Model,
}

impl SupervisedModel {
    pub fn new(model: Model) -> Self {
        Self { model }
    }
}

impl Trainable for SupervisedModel {
    fn step(&mut self, g: &mut Graph, batch: &Batch) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let x = g.constant(&batch.images)?;
        let (logits, bindings) = self.model.forward_graph(g, x, Mode::Train)?;
        let (loss, _) = g.softmax_cross_entropy(logits, &batch.label_indices())?;
        Ok((loss, bindings))
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.model.named_params_mut()
    }

    fn eval_scores(&self, images: &Tensor) -> Result<Tensor> {
        self.model.forward(images, Mode::Eval)
    }

    fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.model.state()
    }

    fn restore(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()> {
        self.model.load_state(state)
    }
}

/// Serialize a training history as CSV.
pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc,seconds\n");
    for r in history {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_acc, r.seconds
        ));
    }
    out
}
