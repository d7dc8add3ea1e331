//! Parameter-importance estimation (diagonal Fisher, MAS) and the
//! quadratic anchor penalty built from it.

use std::collections::{BTreeMap, BTreeSet};

use crate::autograd::{Graph, Mode};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::loss::softmax_probs;
use crate::nn::Model;
use crate::rng::SeededRng;
use crate::tensor::{NodeId, Tensor};
use crate::train::slice_images;

/// Nonnegative per-parameter importance, mirroring a model's trainable
/// parameter names and shapes.
#[derive(Clone, Debug)]
pub struct Importance {
    pub tensors: BTreeMap<String, Tensor>,
    pub n_samples: usize,
}

impl Importance {
    pub fn matches(&self, params: &[(String, &Tensor)]) -> bool {
        params.len() == self.tensors.len()
            && params.iter().all(|(n, t)| {
                self.tensors
                    .get(n)
                    .is_some_and(|imp| imp.shape() == t.shape())
            })
    }
}

fn accumulate_importance(
    model: &Model,
    data: &LabeledSet,
    n_samples: usize,
    per_sample: impl Fn(&mut Graph, NodeId, usize) -> Result<NodeId>,
    transform: impl Fn(f32) -> f32,
    seed: u64,
) -> Result<Importance> {
    if n_samples == 0 || n_samples > data.len() {
        return Err(Error::Contract(format!(
            "importance over {n_samples} samples from a set of {}",
            data.len()
        )));
    }
    let mut rng = SeededRng::from_parts(&[seed, 0x19e2]);
    let picked = rng.sample_indices(data.len(), n_samples);
    let mut acc: BTreeMap<String, Vec<f32>> = model
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, vec![0.0; t.numel()]))
        .collect();

    let mut scratch = model.clone();
    for (k, &i) in picked.iter().enumerate() {
        let images = slice_images(data, i, i + 1);
        let mut g = Graph::new();
        let x = g.constant(&images)?;
        let (logits, bindings) = scratch.forward_graph(&mut g, x, Mode::Eval)?;
        let loss = per_sample(&mut g, logits, k)?;
        g.backward(loss)?;
        for (name, id) in &bindings {
            if let Some(grad) = g.grad(*id) {
                let slot = acc.get_mut(name).expect("binding names match params");
                for (s, &gv) in slot.iter_mut().zip(grad) {
                    *s += transform(gv);
                }
            }
        }
    }
    let inv_n = 1.0 / n_samples as f32;
    let tensors = acc
        .into_iter()
        .map(|(name, mut v)| {
            for x in &mut v {
                *x *= inv_n;
            }
            let shape = model
                .named_params()
                .into_iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.shape().to_vec())
                .expect("name came from params");
            (name, Tensor::new(shape, v).expect("importance is finite"))
        })
        .collect();
    Ok(Importance { tensors, n_samples })
}

/// Diagonal Fisher information: mean over samples of the squared gradient
/// of `log p(ŷ|x)`, with ŷ drawn from the model's own predictive
/// distribution. Batch norm runs in eval mode.
pub fn estimate_fisher_diag(
    model: &Model,
    data: &LabeledSet,
    n_samples: usize,
    seed: u64,
) -> Result<Importance> {
    let label_rng = std::cell::RefCell::new(SeededRng::from_parts(&[seed, 0xf15e2]));
    accumulate_importance(
        model,
        data,
        n_samples,
        |g, logits, _k| {
            let probs = softmax_probs(&g.value_tensor(logits));
            let y = label_rng.borrow_mut().categorical(probs.data());
            // −log p(ŷ|x); its gradient squared is the Fisher contribution
            let (loss, _) = g.softmax_cross_entropy(logits, &[y])?;
            Ok(loss)
        },
        |gv| gv * gv,
        seed,
    )
}

/// MAS importance: mean over samples of |∂‖f(x)‖₂² / ∂θ| where f(x) is the
/// model output. Unsupervised; labels are never read.
pub fn estimate_mas_importance(
    model: &Model,
    data: &LabeledSet,
    n_samples: usize,
    seed: u64,
) -> Result<Importance> {
    accumulate_importance(
        model,
        data,
        n_samples,
        |g, logits, _k| {
            let sq = g.mul(logits, logits)?;
            Ok(g.sum(sq))
        },
        |gv| gv.abs(),
        seed,
    )
}

/// `(λ/2) Σ_i imp_i (θ_i − θ*_i)²` as a plain number.
pub fn importance_penalty(
    params: &[(String, &Tensor)],
    anchor: &BTreeMap<String, Tensor>,
    imp: &Importance,
    lambda: f32,
) -> Result<f32> {
    let mut total = 0.0f64;
    for (name, theta) in params {
        let theta_star = anchor
            .get(name)
            .ok_or_else(|| Error::Contract(format!("anchor missing {name}")))?;
        let weight = imp
            .tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("importance missing {name}")))?;
        if theta.shape() != theta_star.shape() || theta.shape() != weight.shape() {
            return Err(Error::Contract(format!("shape mismatch on {name}")));
        }
        for ((&t, &a), &w) in theta
            .data()
            .iter()
            .zip(theta_star.data())
            .zip(weight.data())
        {
            let d = (t - a) as f64;
            total += w as f64 * d * d;
        }
    }
    Ok((lambda as f64 / 2.0 * total) as f32)
}

/// Append the differentiable penalty to a graph over live parameter nodes.
/// Returns `None` when every parameter is excluded or λ = 0.
pub fn penalty_node(
    g: &mut Graph,
    bindings: &[(String, NodeId)],
    anchor: &BTreeMap<String, Tensor>,
    imp: &Importance,
    lambda: f32,
    exclude: &BTreeSet<String>,
) -> Result<Option<NodeId>> {
    if lambda == 0.0 {
        return Ok(None);
    }
    let mut acc: Option<NodeId> = None;
    for (name, id) in bindings {
        if exclude.contains(name) {
            continue;
        }
        let theta_star = anchor
            .get(name)
            .ok_or_else(|| Error::Contract(format!("anchor missing {name}")))?;
        let weight = imp
            .tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("importance missing {name}")))?;
        let a = g.constant(theta_star)?;
        let w = g.constant(weight)?;
        let d = g.sub(*id, a)?;
        let sq = g.mul(d, d)?;
        let weighted = g.mul(sq, w)?;
        let s = g.sum(weighted);
        acc = Some(match acc {
            None => s,
            Some(prev) => g.add(prev, s)?,
        });
    }
    Ok(acc.map(|node| g.scale(node, lambda / 2.0)))
}
