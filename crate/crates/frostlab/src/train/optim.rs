//! Adam and SGD-with-momentum, stateful per parameter name.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam {
        lr: f32,
        beta1: f32,
        beta2: f32,
        eps: f32,
    },
    Sgd {
        lr: f32,
        momentum: f32,
    },
}

impl OptimizerKind {
    pub fn adam(lr: f32) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd(lr: f32, momentum: f32) -> Self {
        OptimizerKind::Sgd { lr, momentum }
    }

    pub fn lr(&self) -> f32 {
        match self {
            OptimizerKind::Adam { lr, .. } | OptimizerKind::Sgd { lr, .. } => *lr,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

struct ParamState {
    m: Vec<f32>,
    v: Vec<f32>,
    step: u64,
}

/// In-place parameter updates keyed by parameter name.
pub struct Optimizer {
    kind: OptimizerKind,
    state: BTreeMap<String, ParamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Self {
        Self {
            kind,
            state: BTreeMap::new(),
        }
    }

    /// Apply one update to a named parameter given its gradient.
    pub fn step(&mut self, name: &str, param: &mut Tensor, grad: &[f32]) -> Result<()> {
        if grad.len() != param.numel() {
            return Err(Error::Contract(format!(
                "gradient for {name} has {} elements, parameter has {}",
                grad.len(),
                param.numel()
            )));
        }
        match self.kind {
            OptimizerKind::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => {
                let st = self.state.entry(name.to_string()).or_insert_with(|| ParamState {
                    m: vec![0.0; grad.len()],
                    v: vec![0.0; grad.len()],
                    step: 0,
                });
                st.step += 1;
                let bc1 = 1.0 - beta1.powi(st.step as i32);
                let bc2 = 1.0 - beta2.powi(st.step as i32);
                let data = param.data_mut();
                for i in 0..grad.len() {
                    let g = grad[i];
                    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * g;
                    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = st.m[i] / bc1;
                    let v_hat = st.v[i] / bc2;
                    data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            OptimizerKind::Sgd { lr, momentum } => {
                let st = self.state.entry(name.to_string()).or_insert_with(|| ParamState {
                    m: vec![0.0; grad.len()],
                    v: Vec::new(),
                    step: 0,
                });
                let data = param.data_mut();
                for i in 0..grad.len() {
                    st.m[i] = momentum * st.m[i] + grad[i];
                    data[i] -= lr * st.m[i];
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_adam_params_unchanged() {
        let mut opt = Optimizer::new(OptimizerKind::adam(1e-3));
        let mut p = Tensor::new(vec![2], vec![0.5, -0.25]).unwrap();
        opt.step("p", &mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p.data(), &[0.5, -0.25]);
    }

    #[test]
    fn sgd_single_step() {
        let mut opt = Optimizer::new(OptimizerKind::sgd(0.1, 0.0));
        let mut p = Tensor::new(vec![1], vec![1.0]).unwrap();
        opt.step("p", &mut p, &[1.0]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-7);
    }

    #[test]
    fn adam_converges_on_quadratic_bowl() {
        // f(θ) = θ², ∇f = 2θ
        let mut opt = Optimizer::new(OptimizerKind::adam(1e-2));
        let mut p = Tensor::new(vec![1], vec![1.0]).unwrap();
        for _ in 0..500 {
            let g = 2.0 * p.data()[0];
            opt.step("p", &mut p, &[g]).unwrap();
        }
        assert!(p.data()[0].abs() < 1e-3, "{}", p.data()[0]);
    }

    #[test]
    fn gradient_length_mismatch_is_an_error() {
        let mut opt = Optimizer::new(OptimizerKind::default());
        let mut p = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        assert!(opt.step("p", &mut p, &[1.0]).is_err());
    }
}
