//! Frosted retraining: joint optimization of base weights and frost
//! tensors, then a lossless merge back to the base parameter count.

use std::collections::BTreeMap;

use crate::autograd::{Graph, Mode};
use crate::data::protocol::{Batch, BatchStream};
use crate::data::LabeledSet;
use crate::error::Result;
use crate::nn::frost::{frost_wrap, FrostPolicy, FrostedModel};
use crate::nn::{ActKind, Model};
use crate::tensor::{NodeId, Tensor};
use crate::train::{train, TrainConfig, TrainOutcome, Trainable};

pub struct FrostedTrainable {
    pub frosted: FrostedModel,
}

impl FrostedTrainable {
    pub fn new(frosted: FrostedModel) -> Self {
        Self { frosted }
    }

    /// Merge the current (best-restored) frosted state into a plain model.
    pub fn merge(&self) -> Model {
        self.frosted.merge()
    }
}

impl Trainable for FrostedTrainable {
    fn step(&mut self, g: &mut Graph, batch: &Batch) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let x = g.constant(&batch.images)?;
        let (logits, bindings) = self.frosted.forward_graph(g, x, Mode::Train)?;
        let (loss, _) = g.softmax_cross_entropy(logits, &batch.label_indices())?;
        Ok((loss, bindings))
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.frosted.named_params_mut()
    }

    fn eval_scores(&self, images: &Tensor) -> Result<Tensor> {
        self.frosted.forward(images, Mode::Eval)
    }

    fn snapshot(&self) -> BTreeMap<String, Tensor> {
        self.frosted.state()
    }

    fn restore(&mut self, state: &BTreeMap<String, Tensor>) -> Result<()> {
        self.frosted.load_state(state)
    }
}

/// Wrap a trained base in frost tensors, jointly optimize weights and
/// frost over the stream, then merge the best-validation state back into
/// a plain model of the original shape.
pub fn frostnet_fit<B: BatchStream>(
    base: Model,
    activation: ActKind,
    freeze_base: bool,
    stream: &B,
    val: &LabeledSet,
    cfg: &TrainConfig,
) -> Result<(Model, TrainOutcome)> {
    let mut frosted = frost_wrap(base, activation, &FrostPolicy::ConvAndDenseWeights)?;
    frosted.freeze_base = freeze_base;
    let mut trainable = FrostedTrainable::new(frosted);
    let outcome = train(&mut trainable, stream, val, cfg)?;
    Ok((trainable.merge(), outcome))
}
