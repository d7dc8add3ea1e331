//! Multiplicative frosting: a trainable tensor per selected weight tensor,
//! applied as `W ⊙ a(F)` during retraining and folded back into the base
//! weights afterwards.

use std::collections::{BTreeMap, BTreeSet};

use crate::autograd::{GraphT, Mode};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{NodeId, TensorT};

use super::{ActKind, Binding, ModelT};

/// Which parameters receive a frost tensor.
#[derive(Clone, Debug, Default)]
pub enum FrostPolicy {
    /// Conv kernels and dense weight matrices. Biases and batch-norm
    /// affine parameters train directly: a multiplicative layer over a
    /// zero-initialized bias could never move it off zero.
    #[default]
    ConvAndDenseWeights,
    /// An explicit set of parameter names.
    Named(BTreeSet<String>),
}

/// A base model plus one frost tensor per frosted parameter.
pub struct FrostedModelT<S> {
    pub base: ModelT<S>,
    pub frost: BTreeMap<String, TensorT<S>>,
    pub activation: ActKind,
    /// Train only the frost tensors, leaving base weights fixed.
    pub freeze_base: bool,
}

pub type FrostedModel = FrostedModelT<f32>;

/// Frost initialization giving an exact or near-identity start:
/// `a(F) = 1` for no activation, `tanh(3) ≈ 0.995` for tanh.
fn identity_init<S: Scalar>(activation: ActKind) -> Result<S> {
    match activation {
        ActKind::None => Ok(S::ONE),
        ActKind::Tanh => Ok(S::from_f32(3.0)),
        ActKind::Relu => Err(Error::Config(
            "relu is not a supported frosting activation".into(),
        )),
    }
}

/// Attach frost tensors to a model. The wrapped model's forward initially
/// reproduces the base forward.
pub fn frost_wrap<S: Scalar>(
    model: ModelT<S>,
    activation: ActKind,
    policy: &FrostPolicy,
) -> Result<FrostedModelT<S>> {
    let init = identity_init::<S>(activation)?;
    let selected: Vec<(String, Vec<usize>)> = match policy {
        FrostPolicy::ConvAndDenseWeights => {
            let weights: BTreeSet<String> = model.weight_param_names().into_iter().collect();
            model
                .named_params()
                .into_iter()
                .filter(|(n, _)| weights.contains(n))
                .map(|(n, t)| (n, t.shape().to_vec()))
                .collect()
        }
        FrostPolicy::Named(names) => {
            let all: BTreeMap<String, Vec<usize>> = model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.shape().to_vec()))
                .collect();
            for n in names {
                if !all.contains_key(n) {
                    return Err(Error::Contract(format!("no parameter named {n} to frost")));
                }
            }
            all.into_iter().filter(|(n, _)| names.contains(n)).collect()
        }
    };
    let frost = selected
        .into_iter()
        .map(|(name, shape)| (name, TensorT::full(shape, init)))
        .collect();
    Ok(FrostedModelT {
        base: model,
        frost,
        activation,
        freeze_base: false,
    })
}

impl<S: Scalar> FrostedModelT<S> {
    /// Base parameter count plus frost elements.
    pub fn param_count(&self) -> usize {
        self.base.param_count() + self.frost.values().map(|t| t.numel()).sum::<usize>()
    }

    /// Mutable access to every tensor the optimizer may touch: base
    /// parameters (unless frozen) plus the frost tensors.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut TensorT<S>)> {
        let mut out: Vec<(String, &mut TensorT<S>)> = if self.freeze_base {
            Vec::new()
        } else {
            self.base.named_params_mut()
        };
        for (name, t) in &mut self.frost {
            out.push((format!("frost.{name}"), t));
        }
        out
    }

    /// Forward pass with effective weights `W ⊙ a(F)`; both `W` and `F`
    /// become trainable graph leaves (only `F` when `freeze_base`).
    pub fn forward_graph(
        &mut self,
        g: &mut GraphT<S>,
        input: NodeId,
        mode: Mode,
    ) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let binding = Binding::Frosted {
            frost: &self.frost,
            activation: self.activation,
            freeze_base: self.freeze_base,
        };
        self.base.forward_bound(g, input, mode, &binding)
    }

    /// Plain forward through the merged weights; numerically identical to
    /// the graph path because merging pre-applies the same product.
    pub fn forward(&self, batch: &TensorT<S>, mode: Mode) -> Result<TensorT<S>> {
        self.merge().forward(batch, mode)
    }

    /// Fold `a(F)` into the base weights and drop the frost tensors.
    /// The result has exactly the base model's parameter names and shapes.
    pub fn merge(&self) -> ModelT<S> {
        let mut merged = self.base.clone();
        for (name, tensor) in merged.named_params_mut() {
            if let Some(f) = self.frost.get(&name) {
                let fdata = f.data();
                for (w, &fv) in tensor.data_mut().iter_mut().zip(fdata) {
                    let a = match self.activation {
                        ActKind::None => fv,
                        ActKind::Tanh => fv.tanh(),
                        ActKind::Relu => unreachable!("rejected at wrap time"),
                    };
                    *w *= a;
                }
            }
        }
        merged
    }

    /// Base state plus frost tensors under `frost.`-prefixed names.
    pub fn state(&self) -> BTreeMap<String, TensorT<S>> {
        let mut map = self.base.state();
        for (name, t) in &self.frost {
            map.insert(format!("frost.{name}"), t.clone());
        }
        map
    }

    pub fn load_state(&mut self, state: &BTreeMap<String, TensorT<S>>) -> Result<()> {
        let mut base_state = BTreeMap::new();
        let mut frost_state = BTreeMap::new();
        for (name, t) in state {
            if let Some(inner) = name.strip_prefix("frost.") {
                frost_state.insert(inner.to_string(), t.clone());
            } else {
                base_state.insert(name.clone(), t.clone());
            }
        }
        if frost_state.len() != self.frost.len() {
            return Err(Error::Contract(format!(
                "state has {} frost tensors, model expects {}",
                frost_state.len(),
                self.frost.len()
            )));
        }
        self.base.load_state(&base_state)?;
        for (name, t) in &mut self.frost {
            let src = frost_state
                .get(name)
                .ok_or_else(|| Error::Contract(format!("state missing frost tensor {name}")))?;
            if src.shape() != t.shape() {
                return Err(Error::Contract(format!(
                    "frost tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    t.shape()
                )));
            }
            *t = src.clone();
        }
        Ok(())
    }
}
