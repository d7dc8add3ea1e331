//! Whole-model gradient audit against the finite-difference oracle.

use crate::autograd::gradcheck::{grad_check_params, FdOptions};
use crate::autograd::{GraphT, Mode};
use crate::error::{Error, Result};
use crate::nn::{build_lenet, InputSpec, ModelT};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::TensorT;

/// Check outcome for one layer type (conv kernels, dense weights, ...).
#[derive(Debug, Clone)]
pub struct LayerAudit {
    pub layer_type: String,
    /// Coordinates compared against the oracle (ties excluded).
    pub checked: usize,
    /// Coordinates passing |a − n| ≤ atol + tol·max(|a|, |n|); the atol
    /// clause absorbs coordinates below the oracle's resolution.
    pub within_tol: usize,
    pub excluded: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

impl LayerAudit {
    pub fn pass_fraction(&self) -> f64 {
        if self.checked == 0 {
            1.0
        } else {
            self.within_tol as f64 / self.checked as f64
        }
    }
}

fn layer_type_of(name: &str) -> String {
    let suffix = name.rsplit('.').next().unwrap_or(name);
    let prefix = if name.starts_with("conv") {
        "conv"
    } else if name.starts_with("bn") {
        "bn"
    } else {
        "dense"
    };
    format!("{prefix}.{suffix}")
}

/// Gradcheck a LeNet through its full training loss, sampling
/// `coords_per_type` coordinates per layer type.
///
/// Autodiff under test runs at S. The finite-difference probes run
/// through an f64 promotion of the same parameter values, so the oracle's
/// own resolution always exceeds the tolerance being enforced; a working-
/// precision oracle would drown a 1e-2 check in its own rounding.
///
/// `tol` is the relative-error threshold a coordinate must meet; the
/// returned audits report how many did.
pub fn lenet_grad_audit<S: Scalar>(
    seed: u64,
    coords_per_type: usize,
    opts: FdOptions,
    tol: f64,
) -> Result<Vec<LayerAudit>> {
    let base = build_lenet(InputSpec::new(1, 28, 28), 10, seed)?;
    let model: ModelT<S> = cast_model(&base);

    // fixed random batch; batch statistics need at least two samples
    let mut rng = SeededRng::from_parts(&[seed, 0xba7c4]);
    let n = 4usize;
    let image_data: Vec<f64> = (0..n * 1024).map(|_| rng.range_f64(0.0, 1.0)).collect();
    let images64 = TensorT::new(vec![n, 1, 32, 32], image_data)?;
    let images: TensorT<S> = images64.cast();
    let labels: Vec<usize> = (0..n).map(|i| (i * 3) % 10).collect();

    let param_list: Vec<(String, TensorT<S>)> = model
        .named_params()
        .into_iter()
        .map(|(name, t)| (name, t.clone()))
        .collect();
    let names: Vec<String> = param_list.iter().map(|(n, _)| n.clone()).collect();
    let params: Vec<TensorT<S>> = param_list.into_iter().map(|(_, t)| t).collect();

    let mut eval = |values: &[TensorT<S>], want: bool| -> Result<(f64, Option<Vec<Vec<S>>>)> {
        if !want {
            // finite-difference probe: f64 forward at the same point
            let mut scratch = cast_model::<f64>(&base);
            for ((_, slot), v) in scratch.named_params_mut().into_iter().zip(values) {
                *slot = v.cast();
            }
            let mut g = GraphT::<f64>::new();
            let x = g.constant(&images64)?;
            let (logits, _) = scratch.forward_graph(&mut g, x, Mode::Train)?;
            let (loss, _) = g.softmax_cross_entropy(logits, &labels)?;
            return Ok((g.value(loss)[0], None));
        }
        let mut scratch = cast_model::<S>(&base);
        for ((_, slot), v) in scratch.named_params_mut().into_iter().zip(values) {
            *slot = v.clone();
        }
        let mut g = GraphT::<S>::new();
        let x = g.constant(&images)?;
        let (logits, bindings) = scratch.forward_graph(&mut g, x, Mode::Train)?;
        let (loss, _) = g.softmax_cross_entropy(logits, &labels)?;
        let loss_v = g.value(loss)[0].to_f64();
        g.backward(loss)?;
        let mut grads = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let (bname, id) = &bindings[i];
            if bname != name {
                return Err(Error::Contract(format!(
                    "binding order diverged: {bname} vs {name}"
                )));
            }
            grads.push(
                g.grad(*id)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![S::ZERO; values[i].numel()]),
            );
        }
        Ok((loss_v, Some(grads)))
    };

    // sample coordinates per layer type
    let mut audits = Vec::new();
    let mut types: Vec<String> = names.iter().map(|n| layer_type_of(n)).collect::<Vec<_>>();
    types.sort();
    types.dedup();
    for ty in types {
        let members: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| layer_type_of(n) == ty)
            .map(|(i, _)| i)
            .collect();
        let total: usize = members.iter().map(|&i| params[i].numel()).sum();
        let mut pick_rng = SeededRng::from_parts(&[seed, 0xc02d5, fnv_str(&ty)]);
        let picks = coords_per_type.min(total);
        let flat = pick_rng.sample_indices(total, picks);
        let coords: Vec<(usize, usize)> = flat
            .into_iter()
            .map(|mut f| {
                for &i in &members {
                    if f < params[i].numel() {
                        return (i, f);
                    }
                    f -= params[i].numel();
                }
                unreachable!("flat index within total")
            })
            .collect();
        let (report, checks) = grad_check_params(&mut eval, &params, &coords, opts)?;
        let within = checks.iter().filter(|c| c.passes(opts.atol, tol)).count();
        audits.push(LayerAudit {
            layer_type: ty,
            checked: report.checked,
            within_tol: within,
            excluded: report.excluded.len(),
            max_rel_err: report.max_rel_err,
            mean_rel_err: report.mean_rel_err,
        });
    }
    Ok(audits)
}

fn cast_model<S: Scalar>(model: &crate::nn::Model) -> ModelT<S> {
    use crate::nn::{BatchNormLayer, ConvLayer, DenseLayer, Layer};
    let layers = model
        .layers
        .iter()
        .map(|l| match l {
            Layer::Conv2d(c) => Layer::Conv2d(ConvLayer {
                name: c.name.clone(),
                kernel: c.kernel.cast(),
                bias: c.bias.cast(),
                stride: c.stride,
                padding: c.padding,
            }),
            Layer::Dense(d) => Layer::Dense(DenseLayer {
                name: d.name.clone(),
                weight: d.weight.cast(),
                bias: d.bias.cast(),
            }),
            Layer::BatchNorm(b) => Layer::BatchNorm(BatchNormLayer {
                name: b.name.clone(),
                gamma: b.gamma.cast(),
                beta: b.beta.cast(),
                running_mean: b.running_mean.iter().map(|&v| S::from_f32(v)).collect(),
                running_var: b.running_var.iter().map(|&v| S::from_f32(v)).collect(),
                momentum: S::from_f32(b.momentum),
                eps: S::from_f32(b.eps),
            }),
            Layer::Activation(a) => Layer::Activation(*a),
            Layer::MaxPool2 => Layer::MaxPool2,
            Layer::Flatten => Layer::Flatten,
        })
        .collect();
    ModelT {
        layers,
        input_spec: model.input_spec,
        num_classes: model.num_classes,
        arch: model.arch.clone(),
    }
}

fn fnv_str(s: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}
