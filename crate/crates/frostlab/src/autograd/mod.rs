//! Reverse-mode automatic differentiation over dense tensors.
//!
//! A [`GraphT`] is an eager tape: every op computes its value immediately
//! and records what backward needs. Node indices are created in topological
//! order, so the backward pass is a single reverse sweep with gradient
//! accumulation across fan-out.

pub mod gradcheck;
pub mod kernels;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{NodeId, TensorT};
use kernels::ConvDims;

/// Batch-statistics vs running-statistics behavior for batch norm.
#[derive(Copy, Clone, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

struct BnCtx<S> {
    mode: Mode,
    xhat: Vec<S>,
    inv_std: Vec<S>,
    batch: usize,
    channels: usize,
    spatial: usize,
}

enum Op<S> {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        x: NodeId,
        w: NodeId,
        bias: NodeId,
        dims: ConvDims,
        cols: Vec<S>,
    },
    MaxPool2 {
        x: NodeId,
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        ctx: BnCtx<S>,
    },
    Relu {
        x: NodeId,
    },
    Tanh {
        x: NodeId,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    AddBias {
        x: NodeId,
        bias: NodeId,
        rows: usize,
        cols: usize,
    },
    Mul {
        a: NodeId,
        b: NodeId,
    },
    Sub {
        a: NodeId,
        b: NodeId,
    },
    Scale {
        x: NodeId,
        factor: S,
    },
    Sum {
        x: NodeId,
    },
    Reshape {
        x: NodeId,
    },
    SoftmaxCrossEntropy {
        logits: NodeId,
        dlogits: Vec<S>,
    },
    Mse {
        pred: NodeId,
        dpred: Vec<S>,
    },
}

struct NodeRec<S> {
    shape: Vec<usize>,
    value: Vec<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// One computation graph; confined to a single worker for its lifetime.
pub struct GraphT<S> {
    nodes: Vec<NodeRec<S>>,
    grads: Vec<Option<Vec<S>>>,
}

pub type Graph = GraphT<f32>;

impl<S: Scalar> Default for GraphT<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> GraphT<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<S>, requires_grad: bool, op: Op<S>) -> NodeId {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(NodeRec {
            shape,
            value,
            requires_grad,
            op,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: NodeId) -> &[S] {
        &self.nodes[id.0].value
    }

    pub fn value_tensor(&self, id: NodeId) -> TensorT<S> {
        let n = &self.nodes[id.0];
        TensorT::new(n.shape.clone(), n.value.clone()).expect("graph node holds a valid tensor")
    }

    /// Gradient of a node, available after [`GraphT::backward`].
    pub fn grad(&self, id: NodeId) -> Option<&[S]> {
        self.grads.get(id.0).and_then(|g| g.as_deref())
    }

    /// Copy a leaf's gradient back into the tensor it was lifted from.
    pub fn write_grad_into(&self, id: NodeId, t: &mut TensorT<S>) {
        t.node_id = Some(id);
        t.grad = self.grad(id).map(|g| g.to_vec());
    }

    /// Insert a tensor as a graph input, honoring its `requires_grad`.
    pub fn leaf(&mut self, t: &TensorT<S>) -> Result<NodeId> {
        t.check_finite("graph leaf")?;
        Ok(self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            t.requires_grad,
            Op::Leaf,
        ))
    }

    /// Insert a tensor as a trainable input.
    pub fn param(&mut self, t: &TensorT<S>) -> Result<NodeId> {
        t.check_finite("graph param")?;
        Ok(self.push(t.shape().to_vec(), t.data().to_vec(), true, Op::Leaf))
    }

    /// Insert a tensor as a non-trainable input.
    pub fn constant(&mut self, t: &TensorT<S>) -> Result<NodeId> {
        t.check_finite("graph constant")?;
        Ok(self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![S::ZERO; m * n];
        kernels::matmul_nn(self.value(a), self.value(b), m, k, n, &mut out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul { a, b, m, k, n }))
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        bias: NodeId,
        stride: usize,
        padding: usize,
    ) -> Result<NodeId> {
        let (sx, sw) = (self.shape(x).to_vec(), self.shape(w).to_vec());
        if sx.len() != 4 || sw.len() != 4 || sx[1] != sw[1] {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: sx,
                rhs: sw,
            });
        }
        let sb = self.shape(bias).to_vec();
        if sb != vec![sw[0]] {
            return Err(Error::Dimension {
                op: "conv2d bias",
                lhs: sb,
                rhs: vec![sw[0]],
            });
        }
        if stride == 0 {
            return Err(Error::Config("conv2d stride must be positive".into()));
        }
        let (batch, in_ch, in_h, in_w) = (sx[0], sx[1], sx[2], sx[3]);
        let (out_ch, k_h, k_w) = (sw[0], sw[2], sw[3]);
        let (ph, pw) = (in_h + 2 * padding, in_w + 2 * padding);
        if k_h > ph || k_w > pw {
            return Err(Error::Config(format!(
                "kernel {k_h}x{k_w} larger than padded input {ph}x{pw}"
            )));
        }
        if (ph - k_h) % stride != 0 || (pw - k_w) % stride != 0 {
            return Err(Error::Config(format!(
                "non-integral conv output size: input {in_h}x{in_w}, kernel {k_h}x{k_w}, stride {stride}, padding {padding}"
            )));
        }
        let dims = ConvDims {
            batch,
            in_ch,
            in_h,
            in_w,
            out_ch,
            k_h,
            k_w,
            stride,
            padding,
            out_h: (ph - k_h) / stride + 1,
            out_w: (pw - k_w) / stride + 1,
        };
        let (rows, cols_per) = (dims.col_rows(), dims.col_cols());
        let mut cols = vec![S::ZERO; batch * rows * cols_per];
        let mut out = vec![S::ZERO; batch * out_ch * cols_per];
        let sample = in_ch * in_h * in_w;
        let xv = &self.nodes[x.0].value;
        let wv = &self.nodes[w.0].value;
        let bv = &self.nodes[bias.0].value;
        for img in 0..batch {
            let col = &mut cols[img * rows * cols_per..(img + 1) * rows * cols_per];
            kernels::im2col(&xv[img * sample..(img + 1) * sample], &dims, col);
            let out_s = &mut out[img * out_ch * cols_per..(img + 1) * out_ch * cols_per];
            kernels::matmul_nn(wv, col, out_ch, rows, cols_per, out_s);
            for f in 0..out_ch {
                let b = bv[f];
                for v in &mut out_s[f * cols_per..(f + 1) * cols_per] {
                    *v += b;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(bias);
        let shape = vec![batch, out_ch, dims.out_h, dims.out_w];
        Ok(self.push(
            shape,
            out,
            rg,
            Op::Conv2d {
                x,
                w,
                bias,
                dims,
                cols,
            },
        ))
    }

    pub fn maxpool2(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 4 {
            return Err(Error::Dimension {
                op: "maxpool2",
                lhs: sx,
                rhs: vec![0, 0, 0, 0],
            });
        }
        let (n, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Config(format!(
                "maxpool2 requires even spatial dims, got {h}x{w}"
            )));
        }
        let mut out = vec![S::ZERO; n * c * (h / 2) * (w / 2)];
        let mut argmax = vec![0u32; out.len()];
        kernels::maxpool2(self.value(x), n, c, h, w, &mut out, &mut argmax);
        let rg = self.rg(x);
        Ok(self.push(
            vec![n, c, h / 2, w / 2],
            out,
            rg,
            Op::MaxPool2 { x, argmax },
        ))
    }

    /// Batch normalization over the channel axis of `[N, C, ...]`.
    ///
    /// Train mode normalizes with batch statistics and folds them into the
    /// running estimates in place; eval mode normalizes with the running
    /// estimates and leaves them untouched.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &mut [S],
        running_var: &mut [S],
        mode: Mode,
        momentum: S,
        eps: S,
    ) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        if sx.len() < 2 {
            return Err(Error::Dimension {
                op: "batchnorm",
                lhs: sx,
                rhs: vec![0, 0],
            });
        }
        let (batch, channels) = (sx[0], sx[1]);
        let spatial: usize = sx[2..].iter().product();
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.shape(id) != [channels] {
                return Err(Error::Dimension {
                    op: "batchnorm affine",
                    lhs: self.shape(id).to_vec(),
                    rhs: vec![channels],
                });
            }
            let _ = name;
        }
        if running_mean.len() != channels || running_var.len() != channels {
            return Err(Error::Contract(format!(
                "batchnorm running stats have {} channels, input has {channels}",
                running_mean.len()
            )));
        }
        if mode == Mode::Train && batch < 2 {
            return Err(Error::Config(
                "batchnorm train mode requires batch size >= 2".into(),
            ));
        }

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![S::ZERO; channels];
                let mut var = vec![S::ZERO; channels];
                kernels::channel_stats(self.value(x), batch, channels, spatial, &mut mean, &mut var);
                for ch in 0..channels {
                    running_mean[ch] = momentum * running_mean[ch] + (S::ONE - momentum) * mean[ch];
                    running_var[ch] = momentum * running_var[ch] + (S::ONE - momentum) * var[ch];
                }
                (mean, var)
            }
            Mode::Eval => (running_mean.to_vec(), running_var.to_vec()),
        };

        let inv_std: Vec<S> = var.iter().map(|&v| S::ONE / (v + eps).sqrt()).collect();
        let xv = &self.nodes[x.0].value;
        let gv = &self.nodes[gamma.0].value;
        let bv = &self.nodes[beta.0].value;
        let mut xhat = vec![S::ZERO; xv.len()];
        let mut out = vec![S::ZERO; xv.len()];
        for img in 0..batch {
            for ch in 0..channels {
                let base = (img * channels + ch) * spatial;
                let (mu, is, g, be) = (mean[ch], inv_std[ch], gv[ch], bv[ch]);
                for i in base..base + spatial {
                    let xh = (xv[i] - mu) * is;
                    xhat[i] = xh;
                    out[i] = g * xh + be;
                }
            }
        }
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            sx,
            out,
            rg,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                ctx: BnCtx {
                    mode,
                    xhat,
                    inv_std,
                    batch,
                    channels,
                    spatial,
                },
            },
        ))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out: Vec<S> = self.value(x).iter().map(|&v| v.maxv(S::ZERO)).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, rg, Op::Relu { x })
    }

    pub fn tanh_act(&mut self, x: NodeId) -> NodeId {
        let out: Vec<S> = self.value(x).iter().map(|&v| v.tanh()).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, rg, Op::Tanh { x })
    }

    fn binary_elementwise(&mut self, op_name: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op: op_name,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("add", a, b)?;
        let out: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x + y)
            .collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a) || self.rg(b));
        Ok(self.push(shape, out, rg, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("sub", a, b)?;
        let out: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x - y)
            .collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a) || self.rg(b));
        Ok(self.push(shape, out, rg, Op::Sub { a, b }))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary_elementwise("mul", a, b)?;
        let out: Vec<S> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| x * y)
            .collect();
        let (shape, rg) = (self.shape(a).to_vec(), self.rg(a) || self.rg(b));
        Ok(self.push(shape, out, rg, Op::Mul { a, b }))
    }

    /// `x[rows, cols] + bias[cols]`, broadcast over rows.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.shape(x).to_vec();
        let sb = self.shape(bias).to_vec();
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: sx,
                rhs: sb,
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        let bv = &self.nodes[bias.0].value;
        let out: Vec<S> = self
            .value(x)
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % cols])
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(sx, out, rg, Op::AddBias { x, bias, rows, cols }))
    }

    pub fn scale(&mut self, x: NodeId, factor: S) -> NodeId {
        let out: Vec<S> = self.value(x).iter().map(|&v| v * factor).collect();
        let (shape, rg) = (self.shape(x).to_vec(), self.rg(x));
        self.push(shape, out, rg, Op::Scale { x, factor })
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total = self
            .value(x)
            .iter()
            .fold(S::ZERO, |acc, &v| acc + v);
        let rg = self.rg(x);
        self.push(vec![1], vec![total], rg, Op::Sum { x })
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).len() {
            return Err(Error::Dimension {
                op: "reshape",
                lhs: self.shape(x).to_vec(),
                rhs: shape,
            });
        }
        let (value, rg) = (self.value(x).to_vec(), self.rg(x));
        Ok(self.push(shape, value, rg, Op::Reshape { x }))
    }

    /// Mean softmax cross-entropy over the batch. Returns the scalar loss
    /// node and the row-normalized probabilities.
    ///
    /// The per-row loss is accumulated in f64 through log-sum-exp so small
    /// losses survive the subtraction.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[usize],
    ) -> Result<(NodeId, TensorT<S>)> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dimension {
                op: "softmax_cross_entropy",
                lhs: shape,
                rhs: vec![0, 0],
            });
        }
        let (n, k) = (shape[0], shape[1]);
        if k < 2 {
            return Err(Error::Config(
                "softmax cross-entropy needs at least 2 classes".into(),
            ));
        }
        if labels.len() != n {
            return Err(Error::Contract(format!(
                "{} labels for a batch of {n}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Label {
                label: bad,
                num_classes: k,
            });
        }
        let zv = &self.nodes[logits.0].value;
        let mut probs = vec![S::ZERO; n * k];
        let mut dlogits = vec![S::ZERO; n * k];
        let inv_n = S::ONE / S::from_f64(n as f64);
        let mut loss_acc = 0.0f64;
        for row in 0..n {
            let z = &zv[row * k..(row + 1) * k];
            let m = z.iter().fold(z[0], |acc, &v| acc.maxv(v));
            let mut sum = 0.0f64;
            for &v in z {
                sum += (v - m).to_f64().exp();
            }
            loss_acc += sum.ln() - (z[labels[row]] - m).to_f64();
            let inv_sum = S::from_f64(1.0 / sum);
            let prow = &mut probs[row * k..(row + 1) * k];
            let drow = &mut dlogits[row * k..(row + 1) * k];
            for j in 0..k {
                let p = (z[j] - m).exp() * inv_sum;
                prow[j] = p;
                let y = if j == labels[row] { S::ONE } else { S::ZERO };
                drow[j] = (p - y) * inv_n;
            }
        }
        let loss = S::from_f64(loss_acc / n as f64);
        let rg = self.rg(logits);
        let node = self.push(
            vec![1],
            vec![loss],
            rg,
            Op::SoftmaxCrossEntropy { logits, dlogits },
        );
        let probs = TensorT::new(vec![n, k], probs)?;
        Ok((node, probs))
    }

    /// Mean squared error over all elements; `target` is a constant.
    pub fn mse(&mut self, pred: NodeId, target: &TensorT<S>) -> Result<NodeId> {
        if self.shape(pred) != target.shape() {
            return Err(Error::Dimension {
                op: "mse",
                lhs: self.shape(pred).to_vec(),
                rhs: target.shape().to_vec(),
            });
        }
        let pv = &self.nodes[pred.0].value;
        let m = pv.len();
        let inv_m = S::from_f64(1.0 / m as f64);
        let two = S::from_f32(2.0);
        let mut loss_acc = 0.0f64;
        let mut dpred = vec![S::ZERO; m];
        for (i, (&p, &t)) in pv.iter().zip(target.data()).enumerate() {
            let d = p - t;
            loss_acc += d.to_f64() * d.to_f64();
            dpred[i] = two * d * inv_m;
        }
        let loss = S::from_f64(loss_acc / m as f64);
        let rg = self.rg(pred);
        Ok(self.push(vec![1], vec![loss], rg, Op::Mse { pred, dpred }))
    }

    fn acc_into(slot: &mut Option<Vec<S>>, len: usize) -> &mut Vec<S> {
        slot.get_or_insert_with(|| vec![S::ZERO; len])
    }

    /// Populate gradients of every `requires_grad` leaf reachable from a
    /// scalar loss node, accumulating across fan-out.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let n_nodes = self.nodes.len();
        let mut grads: Vec<Option<Vec<S>>> = Vec::with_capacity(n_nodes);
        grads.resize_with(n_nodes, || None);
        grads[loss.0] = Some(vec![S::ONE]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                grads[id] = None;
                continue;
            }
            if matches!(self.nodes[id].op, Op::Leaf) {
                continue; // keep the accumulated gradient
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            // Split borrows: the node being processed vs the grad table.
            let node = &self.nodes[id];
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul { a, b, m, k, n } => {
                    let (m, k, n) = (*m, *k, *n);
                    if self.nodes[a.0].requires_grad {
                        let bv = &self.nodes[b.0].value;
                        let mut da = vec![S::ZERO; m * k];
                        kernels::matmul_nt(&g, bv, m, n, k, &mut da);
                        let slot = Self::acc_into(&mut grads[a.0], m * k);
                        for (s, v) in slot.iter_mut().zip(&da) {
                            *s += *v;
                        }
                    }
                    if self.nodes[b.0].requires_grad {
                        let av = &self.nodes[a.0].value;
                        let slot = Self::acc_into(&mut grads[b.0], k * n);
                        kernels::matmul_tn_acc(av, &g, m, k, n, slot);
                    }
                }
                Op::Conv2d {
                    x,
                    w,
                    bias,
                    dims,
                    cols,
                } => {
                    let rows = dims.col_rows();
                    let cols_per = dims.col_cols();
                    let sample = dims.in_ch * dims.in_h * dims.in_w;
                    let out_per = dims.out_ch * cols_per;
                    let wv = &self.nodes[w.0].value;
                    let need_x = self.nodes[x.0].requires_grad;
                    let need_w = self.nodes[w.0].requires_grad;
                    let need_b = self.nodes[bias.0].requires_grad;
                    let mut dx = if need_x {
                        Some(vec![S::ZERO; dims.batch * sample])
                    } else {
                        None
                    };
                    let mut dw = if need_w {
                        Some(vec![S::ZERO; wv.len()])
                    } else {
                        None
                    };
                    let mut db = if need_b {
                        Some(vec![S::ZERO; dims.out_ch])
                    } else {
                        None
                    };
                    let mut dcol = vec![S::ZERO; rows * cols_per];
                    for img in 0..dims.batch {
                        let gout = &g[img * out_per..(img + 1) * out_per];
                        let col = &cols[img * rows * cols_per..(img + 1) * rows * cols_per];
                        if let Some(dw) = dw.as_mut() {
                            // dW[F, CKK] += dOut · colᵀ
                            for f in 0..dims.out_ch {
                                let grow = &gout[f * cols_per..(f + 1) * cols_per];
                                let wrow = &mut dw[f * rows..(f + 1) * rows];
                                for (r, wr) in wrow.iter_mut().enumerate() {
                                    *wr += kernels::dot(grow, &col[r * cols_per..(r + 1) * cols_per]);
                                }
                            }
                        }
                        if let Some(db) = db.as_mut() {
                            for f in 0..dims.out_ch {
                                let mut acc = S::ZERO;
                                for v in &gout[f * cols_per..(f + 1) * cols_per] {
                                    acc += *v;
                                }
                                db[f] += acc;
                            }
                        }
                        if let Some(dx) = dx.as_mut() {
                            // dcol = Wᵀ · dOut, then scatter back
                            for v in dcol.iter_mut() {
                                *v = S::ZERO;
                            }
                            kernels::matmul_tn_acc(wv, gout, dims.out_ch, rows, cols_per, &mut dcol);
                            kernels::col2im_acc(
                                &dcol,
                                dims,
                                &mut dx[img * sample..(img + 1) * sample],
                            );
                        }
                    }
                    if let Some(dxv) = dx {
                        let slot = Self::acc_into(&mut grads[x.0], dxv.len());
                        for (s, v) in slot.iter_mut().zip(&dxv) {
                            *s += *v;
                        }
                    }
                    if let Some(dwv) = dw {
                        let slot = Self::acc_into(&mut grads[w.0], dwv.len());
                        for (s, v) in slot.iter_mut().zip(&dwv) {
                            *s += *v;
                        }
                    }
                    if let Some(dbv) = db {
                        let slot = Self::acc_into(&mut grads[bias.0], dbv.len());
                        for (s, v) in slot.iter_mut().zip(&dbv) {
                            *s += *v;
                        }
                    }
                }
                Op::MaxPool2 { x, argmax } => {
                    if self.nodes[x.0].requires_grad {
                        let len = self.nodes[x.0].value.len();
                        let slot = Self::acc_into(&mut grads[x.0], len);
                        for (i, &src) in argmax.iter().enumerate() {
                            slot[src as usize] += g[i];
                        }
                    }
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    ctx,
                } => {
                    let gv = &self.nodes[gamma.0].value;
                    let (nb, nc, nl) = (ctx.batch, ctx.channels, ctx.spatial);
                    // per-channel reductions
                    let mut dgamma = vec![S::ZERO; nc];
                    let mut dbeta = vec![S::ZERO; nc];
                    for img in 0..nb {
                        for ch in 0..nc {
                            let base = (img * nc + ch) * nl;
                            let mut sg = S::ZERO;
                            let mut sb = S::ZERO;
                            for i in base..base + nl {
                                sg += g[i] * ctx.xhat[i];
                                sb += g[i];
                            }
                            dgamma[ch] += sg;
                            dbeta[ch] += sb;
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let len = self.nodes[x.0].value.len();
                        let mut dx = vec![S::ZERO; len];
                        match ctx.mode {
                            Mode::Train => {
                                let m = S::from_f64((nb * nl) as f64);
                                for img in 0..nb {
                                    for ch in 0..nc {
                                        let base = (img * nc + ch) * nl;
                                        let coef = gv[ch] * ctx.inv_std[ch] / m;
                                        for i in base..base + nl {
                                            dx[i] = coef
                                                * (m * g[i]
                                                    - ctx.xhat[i] * dgamma[ch]
                                                    - dbeta[ch]);
                                        }
                                    }
                                }
                            }
                            Mode::Eval => {
                                for img in 0..nb {
                                    for ch in 0..nc {
                                        let base = (img * nc + ch) * nl;
                                        let coef = gv[ch] * ctx.inv_std[ch];
                                        for i in base..base + nl {
                                            dx[i] = coef * g[i];
                                        }
                                    }
                                }
                            }
                        }
                        let slot = Self::acc_into(&mut grads[x.0], len);
                        for (s, v) in slot.iter_mut().zip(&dx) {
                            *s += *v;
                        }
                    }
                    if self.nodes[gamma.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[gamma.0], nc);
                        for (s, v) in slot.iter_mut().zip(&dgamma) {
                            *s += *v;
                        }
                    }
                    if self.nodes[beta.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[beta.0], nc);
                        for (s, v) in slot.iter_mut().zip(&dbeta) {
                            *s += *v;
                        }
                    }
                }
                Op::Relu { x } => {
                    if self.nodes[x.0].requires_grad {
                        let xv = &self.nodes[x.0].value;
                        let slot = Self::acc_into(&mut grads[x.0], xv.len());
                        for i in 0..xv.len() {
                            if xv[i] > S::ZERO {
                                slot[i] += g[i];
                            }
                        }
                    }
                }
                Op::Tanh { x } => {
                    if self.nodes[x.0].requires_grad {
                        let yv = &node.value;
                        let slot = Self::acc_into(&mut grads[x.0], yv.len());
                        for i in 0..yv.len() {
                            slot[i] += g[i] * (S::ONE - yv[i] * yv[i]);
                        }
                    }
                }
                Op::Add { a, b } => {
                    for id in [a, b] {
                        if self.nodes[id.0].requires_grad {
                            let slot = Self::acc_into(&mut grads[id.0], g.len());
                            for (s, v) in slot.iter_mut().zip(&g) {
                                *s += *v;
                            }
                        }
                    }
                }
                Op::Sub { a, b } => {
                    if self.nodes[a.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[a.0], g.len());
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s += *v;
                        }
                    }
                    if self.nodes[b.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[b.0], g.len());
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s -= *v;
                        }
                    }
                }
                Op::Mul { a, b } => {
                    if self.nodes[a.0].requires_grad {
                        let bv = &self.nodes[b.0].value;
                        let slot = Self::acc_into(&mut grads[a.0], g.len());
                        for i in 0..g.len() {
                            slot[i] += g[i] * bv[i];
                        }
                    }
                    if self.nodes[b.0].requires_grad {
                        let av = &self.nodes[a.0].value;
                        let slot = Self::acc_into(&mut grads[b.0], g.len());
                        for i in 0..g.len() {
                            slot[i] += g[i] * av[i];
                        }
                    }
                }
                Op::AddBias { x, bias, rows, cols } => {
                    let (rows, cols) = (*rows, *cols);
                    if self.nodes[x.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[x.0], g.len());
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s += *v;
                        }
                    }
                    if self.nodes[bias.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[bias.0], cols);
                        for r in 0..rows {
                            for c in 0..cols {
                                slot[c] += g[r * cols + c];
                            }
                        }
                    }
                }
                Op::Scale { x, factor } => {
                    if self.nodes[x.0].requires_grad {
                        let f = *factor;
                        let slot = Self::acc_into(&mut grads[x.0], g.len());
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s += f * *v;
                        }
                    }
                }
                Op::Sum { x } => {
                    if self.nodes[x.0].requires_grad {
                        let len = self.nodes[x.0].value.len();
                        let gv = g[0];
                        let slot = Self::acc_into(&mut grads[x.0], len);
                        for s in slot.iter_mut() {
                            *s += gv;
                        }
                    }
                }
                Op::Reshape { x } => {
                    if self.nodes[x.0].requires_grad {
                        let slot = Self::acc_into(&mut grads[x.0], g.len());
                        for (s, v) in slot.iter_mut().zip(&g) {
                            *s += *v;
                        }
                    }
                }
                Op::SoftmaxCrossEntropy { logits, dlogits } => {
                    if self.nodes[logits.0].requires_grad {
                        let gv = g[0];
                        let slot = Self::acc_into(&mut grads[logits.0], dlogits.len());
                        for (s, v) in slot.iter_mut().zip(dlogits) {
                            *s += gv * *v;
                        }
                    }
                }
                Op::Mse { pred, dpred } => {
                    if self.nodes[pred.0].requires_grad {
                        let gv = g[0];
                        let slot = Self::acc_into(&mut grads[pred.0], dpred.len());
                        for (s, v) in slot.iter_mut().zip(dpred) {
                            *s += gv * *v;
                        }
                    }
                }
            }
        }
        self.grads = grads;
        Ok(())
    }
}
