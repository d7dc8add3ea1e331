//! Layers, truncated-normal initialization, and the LeNet backbone.

pub mod frost;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::autograd::{GraphT, Mode};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;
use crate::tensor::{NodeId, Tensor, TensorT};

#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActKind {
    None,
    Relu,
    Tanh,
}

#[derive(Copy, Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl InputSpec {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn numel(&self) -> usize {
        self.channels * self.height * self.width
    }
}

pub struct ConvLayer<S> {
    pub name: String,
    pub kernel: TensorT<S>,
    pub bias: TensorT<S>,
    pub stride: usize,
    pub padding: usize,
}

pub struct DenseLayer<S> {
    pub name: String,
    pub weight: TensorT<S>, // [in, out]
    pub bias: TensorT<S>,
}

pub struct BatchNormLayer<S> {
    pub name: String,
    pub gamma: TensorT<S>,
    pub beta: TensorT<S>,
    pub running_mean: Vec<S>,
    pub running_var: Vec<S>,
    pub momentum: S,
    pub eps: S,
}

pub enum Layer<S> {
    Conv2d(ConvLayer<S>),
    Dense(DenseLayer<S>),
    BatchNorm(BatchNormLayer<S>),
    Activation(ActKind),
    MaxPool2,
    Flatten,
}

/// Ordered feed-forward network with named parameters.
pub struct ModelT<S> {
    pub layers: Vec<Layer<S>>,
    pub input_spec: InputSpec,
    pub num_classes: usize,
    pub arch: String,
}

pub type Model = ModelT<f32>;

impl<S: Scalar> Clone for ModelT<S> {
    fn clone(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv2d(c) => Layer::Conv2d(ConvLayer {
                    name: c.name.clone(),
                    kernel: c.kernel.clone(),
                    bias: c.bias.clone(),
                    stride: c.stride,
                    padding: c.padding,
                }),
                Layer::Dense(d) => Layer::Dense(DenseLayer {
                    name: d.name.clone(),
                    weight: d.weight.clone(),
                    bias: d.bias.clone(),
                }),
                Layer::BatchNorm(b) => Layer::BatchNorm(BatchNormLayer {
                    name: b.name.clone(),
                    gamma: b.gamma.clone(),
                    beta: b.beta.clone(),
                    running_mean: b.running_mean.clone(),
                    running_var: b.running_var.clone(),
                    momentum: b.momentum,
                    eps: b.eps,
                }),
                Layer::Activation(a) => Layer::Activation(*a),
                Layer::MaxPool2 => Layer::MaxPool2,
                Layer::Flatten => Layer::Flatten,
            })
            .collect();
        Self {
            layers,
            input_spec: self.input_spec,
            num_classes: self.num_classes,
            arch: self.arch.clone(),
        }
    }
}

/// How parameters enter a graph during a forward pass.
pub(crate) enum Binding<'a, S> {
    /// Parameters bound directly; trainable iff `trainable`.
    Plain { trainable: bool },
    /// Selected parameters multiplied by an activated frost tensor.
    Frosted {
        frost: &'a BTreeMap<String, TensorT<S>>,
        activation: ActKind,
        freeze_base: bool,
    },
}

impl<S: Scalar> ModelT<S> {
    /// Trainable parameters in layer order.
    pub fn named_params(&self) -> Vec<(String, &TensorT<S>)> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push((format!("{}.kernel", c.name), &c.kernel));
                    out.push((format!("{}.bias", c.name), &c.bias));
                }
                Layer::Dense(d) => {
                    out.push((format!("{}.weight", d.name), &d.weight));
                    out.push((format!("{}.bias", d.name), &d.bias));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{}.gamma", b.name), &b.gamma));
                    out.push((format!("{}.beta", b.name), &b.beta));
                }
                _ => {}
            }
        }
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut TensorT<S>)> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv2d(c) => {
                    out.push((format!("{}.kernel", c.name), &mut c.kernel));
                    out.push((format!("{}.bias", c.name), &mut c.bias));
                }
                Layer::Dense(d) => {
                    out.push((format!("{}.weight", d.name), &mut d.weight));
                    out.push((format!("{}.bias", d.name), &mut d.bias));
                }
                Layer::BatchNorm(b) => {
                    out.push((format!("{}.gamma", b.name), &mut b.gamma));
                    out.push((format!("{}.beta", b.name), &mut b.beta));
                }
                _ => {}
            }
        }
        out
    }

    /// Names of multiplicative-capacity parameters (conv kernels, dense
    /// weight matrices) — the default frosting targets.
    pub fn weight_param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv2d(c) => out.push(format!("{}.kernel", c.name)),
                Layer::Dense(d) => out.push(format!("{}.weight", d.name)),
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }

    /// Trainable parameters plus batch-norm running statistics.
    pub fn state(&self) -> BTreeMap<String, TensorT<S>> {
        let mut map: BTreeMap<String, TensorT<S>> = self
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                map.insert(
                    format!("{}.running_mean", b.name),
                    TensorT::new(vec![b.running_mean.len()], b.running_mean.clone())
                        .expect("running stats well-formed"),
                );
                map.insert(
                    format!("{}.running_var", b.name),
                    TensorT::new(vec![b.running_var.len()], b.running_var.clone())
                        .expect("running stats well-formed"),
                );
            }
        }
        map
    }

    /// Restore every tensor produced by [`ModelT::state`]; names and shapes
    /// must match exactly.
    pub fn load_state(&mut self, state: &BTreeMap<String, TensorT<S>>) -> Result<()> {
        let mut expected: Vec<String> = self.named_params().into_iter().map(|(n, _)| n).collect();
        for layer in &self.layers {
            if let Layer::BatchNorm(b) = layer {
                expected.push(format!("{}.running_mean", b.name));
                expected.push(format!("{}.running_var", b.name));
            }
        }
        if expected.len() != state.len() {
            return Err(Error::Contract(format!(
                "state has {} tensors, model expects {}",
                state.len(),
                expected.len()
            )));
        }
        for name in &expected {
            if !state.contains_key(name) {
                return Err(Error::Contract(format!("state missing tensor {name}")));
            }
        }
        for (name, tensor) in self.named_params_mut() {
            let src = &state[&name];
            if src.shape() != tensor.shape() {
                return Err(Error::Contract(format!(
                    "state tensor {name} has shape {:?}, expected {:?}",
                    src.shape(),
                    tensor.shape()
                )));
            }
            *tensor = src.clone();
        }
        for layer in &mut self.layers {
            if let Layer::BatchNorm(b) = layer {
                let rm = &state[&format!("{}.running_mean", b.name)];
                let rv = &state[&format!("{}.running_var", b.name)];
                if rm.numel() != b.running_mean.len() || rv.numel() != b.running_var.len() {
                    return Err(Error::Contract(format!(
                        "running stats for {} have the wrong width",
                        b.name
                    )));
                }
                b.running_mean = rm.data().to_vec();
                b.running_var = rv.data().to_vec();
            }
        }
        Ok(())
    }

    pub(crate) fn bind_param(
        g: &mut GraphT<S>,
        name: &str,
        tensor: &TensorT<S>,
        binding: &Binding<'_, S>,
        params_out: &mut Vec<(String, NodeId)>,
    ) -> Result<NodeId> {
        match binding {
            Binding::Plain { trainable } => {
                if *trainable {
                    let id = g.param(tensor)?;
                    params_out.push((name.to_string(), id));
                    Ok(id)
                } else {
                    g.constant(tensor)
                }
            }
            Binding::Frosted {
                frost,
                activation,
                freeze_base,
            } => match frost.get(name) {
                None => {
                    if *freeze_base {
                        g.constant(tensor)
                    } else {
                        let id = g.param(tensor)?;
                        params_out.push((name.to_string(), id));
                        Ok(id)
                    }
                }
                Some(f) => {
                    let w = if *freeze_base {
                        g.constant(tensor)?
                    } else {
                        let id = g.param(tensor)?;
                        params_out.push((name.to_string(), id));
                        id
                    };
                    let f_id = g.param(f)?;
                    params_out.push((format!("frost.{name}"), f_id));
                    let act = match activation {
                        ActKind::None => f_id,
                        ActKind::Tanh => g.tanh_act(f_id),
                        ActKind::Relu => {
                            return Err(Error::Config(
                                "relu is not a supported frosting activation".into(),
                            ))
                        }
                    };
                    g.mul(w, act)
                }
            },
        }
    }

    /// Run the network inside a graph. Returns the logits node and the
    /// trainable (name, node) bindings introduced by this pass.
    pub(crate) fn forward_bound(
        &mut self,
        g: &mut GraphT<S>,
        input: NodeId,
        mode: Mode,
        binding: &Binding<'_, S>,
    ) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        let shape = g.shape(input).to_vec();
        let spec = self.input_spec;
        if shape.len() != 4
            || shape[1] != spec.channels
            || shape[2] != spec.height
            || shape[3] != spec.width
        {
            return Err(Error::Dimension {
                op: "model forward",
                lhs: shape,
                rhs: vec![0, spec.channels, spec.height, spec.width],
            });
        }
        let batch = shape[0];
        let mut params = Vec::new();
        let mut x = input;
        for layer in &mut self.layers {
            x = match layer {
                Layer::Conv2d(c) => {
                    let kname = format!("{}.kernel", c.name);
                    let bname = format!("{}.bias", c.name);
                    let w = Self::bind_param(g, &kname, &c.kernel, binding, &mut params)?;
                    let b = Self::bind_param(g, &bname, &c.bias, binding, &mut params)?;
                    g.conv2d(x, w, b, c.stride, c.padding)?
                }
                Layer::Dense(d) => {
                    let wname = format!("{}.weight", d.name);
                    let bname = format!("{}.bias", d.name);
                    let w = Self::bind_param(g, &wname, &d.weight, binding, &mut params)?;
                    let b = Self::bind_param(g, &bname, &d.bias, binding, &mut params)?;
                    let mm = g.matmul(x, w)?;
                    g.add_bias(mm, b)?
                }
                Layer::BatchNorm(bn) => {
                    let gname = format!("{}.gamma", bn.name);
                    let bname = format!("{}.beta", bn.name);
                    let gamma = Self::bind_param(g, &gname, &bn.gamma, binding, &mut params)?;
                    let beta = Self::bind_param(g, &bname, &bn.beta, binding, &mut params)?;
                    g.batchnorm(
                        x,
                        gamma,
                        beta,
                        &mut bn.running_mean,
                        &mut bn.running_var,
                        mode,
                        bn.momentum,
                        bn.eps,
                    )?
                }
                Layer::Activation(ActKind::None) => x,
                Layer::Activation(ActKind::Relu) => g.relu(x),
                Layer::Activation(ActKind::Tanh) => g.tanh_act(x),
                Layer::MaxPool2 => g.maxpool2(x)?,
                Layer::Flatten => {
                    let numel: usize = g.shape(x)[1..].iter().product();
                    g.reshape(x, vec![batch, numel])?
                }
            };
        }
        let out_shape = g.shape(x);
        if out_shape != [batch, self.num_classes] {
            return Err(Error::Contract(format!(
                "model produced {:?}, expected [{batch}, {}]",
                out_shape, self.num_classes
            )));
        }
        Ok((x, params))
    }

    /// Training-path forward: parameters are trainable leaves, batch-norm
    /// running statistics are updated in train mode.
    pub fn forward_graph(
        &mut self,
        g: &mut GraphT<S>,
        input: NodeId,
        mode: Mode,
    ) -> Result<(NodeId, Vec<(String, NodeId)>)> {
        self.forward_bound(g, input, mode, &Binding::Plain { trainable: true })
    }

    /// Plain forward pass on a batch; logits only.
    ///
    /// Eval mode normalizes with the stored running statistics; train mode
    /// uses batch statistics but does not persist them — persistent updates
    /// happen only on the training path.
    pub fn forward(&self, batch: &TensorT<S>, mode: Mode) -> Result<TensorT<S>> {
        let mut scratch = self.clone();
        let mut g = GraphT::new();
        let x = g.constant(batch)?;
        let (logits, _) =
            scratch.forward_bound(&mut g, x, mode, &Binding::Plain { trainable: false })?;
        Ok(g.value_tensor(logits))
    }
}

/// I.i.d. normal(0, stddev²) samples resampled into ±2·stddev.
pub fn truncated_normal<S: Scalar>(
    shape: Vec<usize>,
    stddev: f64,
    rng: &mut SeededRng,
) -> TensorT<S> {
    let numel = shape.iter().product();
    let mut data = Vec::with_capacity(numel);
    while data.len() < numel {
        let z = rng.standard_normal();
        if z.abs() <= 2.0 {
            data.push(S::from_f64(z * stddev));
        }
    }
    TensorT::new(shape, data).expect("sampled tensor is well-formed")
}

/// Seed-addressed form of [`truncated_normal`].
pub fn init_truncated_normal(shape: Vec<usize>, stddev: f64, seed: u64) -> Tensor {
    let mut rng = SeededRng::from_parts(&[seed, 0x7275_7374]);
    truncated_normal(shape, stddev, &mut rng)
}

const INIT_STDDEV: f64 = 0.1;

/// LeNet with batch normalization:
/// conv(6,5×5)→BN→ReLU→pool → conv(16,5×5)→BN→ReLU→pool → flatten
/// → dense(120)→ReLU → dense(84)→ReLU → dense(num_classes).
///
/// Accepts 1×28×28 (stored zero-padded as 1×32×32), 1×32×32, or 3×32×32
/// input. Weights are truncated-normal, biases zero.
pub fn build_lenet(input: InputSpec, num_classes: usize, seed: u64) -> Result<Model> {
    let spec = match (input.channels, input.height, input.width) {
        (1, 28, 28) | (1, 32, 32) => InputSpec::new(1, 32, 32),
        (3, 32, 32) => input,
        _ => {
            return Err(Error::Config(format!(
                "unsupported input spec {}x{}x{}",
                input.channels, input.height, input.width
            )))
        }
    };
    let mut rng = SeededRng::from_parts(&[seed, 0x1e4e7]);
    let mut layers: Vec<Layer<f32>> = Vec::new();

    let conv = |name: &str, in_ch: usize, out_ch: usize, rng: &mut SeededRng| {
        Layer::Conv2d(ConvLayer {
            name: name.to_string(),
            kernel: truncated_normal(vec![out_ch, in_ch, 5, 5], INIT_STDDEV, rng),
            bias: Tensor::zeros(vec![out_ch]),
            stride: 1,
            padding: 0,
        })
    };
    let bn = |name: &str, ch: usize| {
        Layer::BatchNorm(BatchNormLayer {
            name: name.to_string(),
            gamma: Tensor::ones(vec![ch]),
            beta: Tensor::zeros(vec![ch]),
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
            momentum: 0.9,
            eps: 1e-5,
        })
    };
    let dense = |name: &str, input: usize, output: usize, rng: &mut SeededRng| {
        Layer::Dense(DenseLayer {
            name: name.to_string(),
            weight: truncated_normal(vec![input, output], INIT_STDDEV, rng),
            bias: Tensor::zeros(vec![output]),
        })
    };

    layers.push(conv("conv1", spec.channels, 6, &mut rng));
    layers.push(bn("bn1", 6));
    layers.push(Layer::Activation(ActKind::Relu));
    layers.push(Layer::MaxPool2);
    layers.push(conv("conv2", 6, 16, &mut rng));
    layers.push(bn("bn2", 16));
    layers.push(Layer::Activation(ActKind::Relu));
    layers.push(Layer::MaxPool2);
    layers.push(Layer::Flatten);
    layers.push(dense("fc1", 16 * 5 * 5, 120, &mut rng));
    layers.push(Layer::Activation(ActKind::Relu));
    layers.push(dense("fc2", 120, 84, &mut rng));
    layers.push(Layer::Activation(ActKind::Relu));
    layers.push(dense("fc3", 84, num_classes, &mut rng));

    Ok(Model {
        layers,
        input_spec: spec,
        num_classes,
        arch: "lenet".to_string(),
    })
}

/// Two-layer MLP head over the flattened input; the "simpler" booster
/// architecture.
pub fn build_mlp(input: InputSpec, num_classes: usize, hidden: usize, seed: u64) -> Result<Model> {
    let mut rng = SeededRng::from_parts(&[seed, 0x313370]);
    let layers = vec![
        Layer::Flatten,
        Layer::Dense(DenseLayer {
            name: "fc1".to_string(),
            weight: truncated_normal(vec![input.numel(), hidden], INIT_STDDEV, &mut rng),
            bias: Tensor::zeros(vec![hidden]),
        }),
        Layer::Activation(ActKind::Relu),
        Layer::Dense(DenseLayer {
            name: "fc2".to_string(),
            weight: truncated_normal(vec![hidden, num_classes], INIT_STDDEV, &mut rng),
            bias: Tensor::zeros(vec![num_classes]),
        }),
    ];
    Ok(Model {
        layers,
        input_spec: input,
        num_classes,
        arch: format!("mlp{hidden}"),
    })
}

/// Rebuild a model skeleton from checkpoint metadata.
pub fn build_from_meta(meta: &BTreeMap<String, String>) -> Result<Model> {
    let arch = meta
        .get("arch")
        .ok_or_else(|| Error::Contract("checkpoint metadata missing arch".into()))?;
    let input = meta
        .get("input")
        .ok_or_else(|| Error::Contract("checkpoint metadata missing input".into()))?;
    let classes: usize = meta
        .get("classes")
        .and_then(|c| c.parse().ok())
        .ok_or_else(|| Error::Contract("checkpoint metadata missing classes".into()))?;
    let dims: Vec<usize> = input
        .split('x')
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Contract(format!("bad input spec {input}")))?;
    if dims.len() != 3 {
        return Err(Error::Contract(format!("bad input spec {input}")));
    }
    let spec = InputSpec::new(dims[0], dims[1], dims[2]);
    if arch == "lenet" {
        build_lenet(spec, classes, 0)
    } else if let Some(hidden) = arch.strip_prefix("mlp") {
        let hidden: usize = hidden
            .parse()
            .map_err(|_| Error::Contract(format!("bad arch {arch}")))?;
        build_mlp(spec, classes, hidden, 0)
    } else {
        Err(Error::Contract(format!("unknown arch {arch}")))
    }
}

impl Model {
    /// Metadata describing this architecture, for checkpoints.
    pub fn arch_meta(&self) -> Vec<(String, String)> {
        vec![
            ("arch".to_string(), self.arch.clone()),
            (
                "input".to_string(),
                format!(
                    "{}x{}x{}",
                    self.input_spec.channels, self.input_spec.height, self.input_spec.width
                ),
            ),
            ("classes".to_string(), self.num_classes.to_string()),
        ]
    }
}
