//! Central finite-difference verification of autodiff gradients.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::TensorT;

/// One compared coordinate.
#[derive(Debug, Clone, Copy)]
pub struct CoordCheck {
    pub coord: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
}

impl CoordCheck {
    pub fn abs_err(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }

    /// Relative error against the larger gradient, floored by `atol` so
    /// coordinates below the oracle's resolution do not explode.
    pub fn rel_err(&self, atol: f64) -> f64 {
        self.abs_err() / self.analytic.abs().max(self.numeric.abs()).max(atol)
    }

    /// Standard combined pass rule: |a − n| ≤ atol + rtol·max(|a|, |n|).
    pub fn passes(&self, atol: f64, rtol: f64) -> bool {
        self.abs_err() <= atol + rtol * self.analytic.abs().max(self.numeric.abs())
    }
}

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradReport {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    /// Coordinates compared against the oracle.
    pub checked: usize,
    /// Coordinates excluded because the one-sided slopes disagree — the
    /// function is not differentiable there (maxpool ties, relu kinks).
    pub excluded: Vec<(usize, usize)>,
}

/// Evaluation callback: compute the scalar loss at the given parameter
/// values; when `want_grads` is set, also return the autodiff gradient of
/// each parameter.
pub type EvalFn<'a, S> =
    dyn FnMut(&[TensorT<S>], bool) -> Result<(f64, Option<Vec<Vec<S>>>)> + 'a;

/// Finite-difference settings.
#[derive(Copy, Clone, Debug)]
pub struct FdOptions {
    pub eps: f64,
    /// Oracle noise floor: differences below it are indistinguishable
    /// from rounding.
    pub atol: f64,
    /// Combine step sizes eps and 2·eps to cancel the leading truncation
    /// term; useful when forward rounding forces a larger eps.
    pub richardson: bool,
}

impl FdOptions {
    pub fn central(eps: f64, atol: f64) -> Self {
        Self {
            eps,
            atol,
            richardson: false,
        }
    }

    pub fn richardson(eps: f64, atol: f64) -> Self {
        Self {
            eps,
            atol,
            richardson: true,
        }
    }
}

/// Compare autodiff gradients against central finite differences at the
/// listed `(param, element)` coordinates.
///
/// Also returns the per-coordinate relative errors for threshold counting.
pub fn grad_check_params<S: Scalar>(
    eval: &mut EvalFn<'_, S>,
    params: &[TensorT<S>],
    coords: &[(usize, usize)],
    opts: FdOptions,
) -> Result<(GradReport, Vec<CoordCheck>)> {
    let FdOptions {
        eps,
        atol,
        richardson,
    } = opts;
    let (l1, _) = eval(params, false)?;
    let (l2, _) = eval(params, false)?;
    if l1.to_bits() != l2.to_bits() {
        return Err(Error::OracleInvalid(format!(
            "two forward passes disagree: {l1} vs {l2}"
        )));
    }
    // f0 for the kink detector comes from the probe path so it is
    // consistent with f_plus/f_minus
    let f0 = l1;
    let (_, grads) = eval(params, true)?;
    let grads = grads.ok_or_else(|| Error::Contract("eval returned no gradients".into()))?;
    if grads.len() != params.len() {
        return Err(Error::Contract(format!(
            "eval returned {} gradients for {} params",
            grads.len(),
            params.len()
        )));
    }

    let mut work: Vec<TensorT<S>> = params.to_vec();
    let mut checks = Vec::with_capacity(coords.len());
    let mut excluded = Vec::new();

    for &(pi, ei) in coords {
        let orig = work[pi].data()[ei];
        let mut diff_at = |step: f64| -> Result<(f64, f64)> {
            work[pi].data_mut()[ei] = orig + S::from_f64(step);
            let (f_plus, _) = eval(&work, false)?;
            work[pi].data_mut()[ei] = orig - S::from_f64(step);
            let (f_minus, _) = eval(&work, false)?;
            work[pi].data_mut()[ei] = orig;
            Ok((f_plus, f_minus))
        };
        let (f_plus, f_minus) = diff_at(eps)?;
        let d1 = (f_plus - f_minus) / (2.0 * eps);
        let numeric = if richardson {
            let (f_plus2, f_minus2) = diff_at(2.0 * eps)?;
            let d2 = (f_plus2 - f_minus2) / (4.0 * eps);
            (4.0 * d1 - d2) / 3.0
        } else {
            d1
        };
        let analytic = grads[pi][ei].to_f64();
        let denom = numeric.abs().max(analytic.abs());

        // one-sided slopes; a large disagreement marks a kink
        let d_plus = (f_plus - f0) / eps;
        let d_minus = (f0 - f_minus) / eps;
        if (d_plus - d_minus).abs() > 0.25 * denom.max(atol) && (d_plus - d_minus).abs() > 10.0 * atol
        {
            excluded.push((pi, ei));
            continue;
        }
        checks.push(CoordCheck {
            coord: (pi, ei),
            analytic,
            numeric,
        });
    }

    let rels: Vec<f64> = checks.iter().map(|c| c.rel_err(atol)).collect();
    let max_rel_err = rels.iter().copied().fold(0.0, f64::max);
    let mean_rel_err = if rels.is_empty() {
        0.0
    } else {
        rels.iter().sum::<f64>() / rels.len() as f64
    };
    Ok((
        GradReport {
            max_rel_err,
            mean_rel_err,
            checked: checks.len(),
            excluded,
        },
        checks,
    ))
}

/// Single-tensor convenience form: check df/dx for a scalar-valued graph
/// function over every element of `x`.
pub fn grad_check<S: Scalar, F>(
    f: F,
    x: &TensorT<S>,
    eps: f64,
    atol: f64,
) -> Result<(GradReport, Vec<CoordCheck>)>
where
    F: Fn(&mut crate::autograd::GraphT<S>, crate::tensor::NodeId) -> Result<crate::tensor::NodeId>,
{
    let coords: Vec<(usize, usize)> = (0..x.numel()).map(|i| (0, i)).collect();
    let mut eval = |params: &[TensorT<S>], want: bool| -> Result<(f64, Option<Vec<Vec<S>>>)> {
        let mut g = crate::autograd::GraphT::<S>::new();
        let xid = g.param(&params[0])?;
        let loss = f(&mut g, xid)?;
        if g.value(loss).len() != 1 {
            return Err(Error::Contract("grad_check function must be scalar".into()));
        }
        let lv = g.value(loss)[0].to_f64();
        if want {
            g.backward(loss)?;
            let gx = g
                .grad(xid)
                .map(|s| s.to_vec())
                .unwrap_or_else(|| vec![S::ZERO; params[0].numel()]);
            Ok((lv, Some(vec![gx])))
        } else {
            Ok((lv, None))
        }
    };
    grad_check_params(&mut eval, std::slice::from_ref(x), &coords, FdOptions::central(eps, atol))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sum_has_zero_error() {
        // dyadic values and a power-of-two step keep every f64 sum exact,
        // so the finite difference of a linear map is error-free
        let x = Tensor::new(vec![3], vec![0.5, -0.25, 1.5]).unwrap();
        let (report, checks) =
            grad_check(|g, x| Ok(g.sum(x)), &x.cast::<f64>(), 0.015625, 1e-9).unwrap();
        assert_eq!(report.checked, 3);
        assert!(checks.iter().all(|c| c.abs_err() == 0.0), "{checks:?}");
    }

    #[test]
    fn softmax_ce_matches_finite_differences() {
        let x = Tensor::new(vec![2, 3], vec![0.3, -0.5, 0.9, 0.1, 0.2, -0.7]).unwrap();
        let (report, _) = grad_check(
            |g, x| Ok(g.softmax_cross_entropy(x, &[2, 0])?.0),
            &x.cast::<f64>(),
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    #[test]
    fn maxpool_tie_is_excluded() {
        // two equal elements in one window: kink in the loss surface
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let (report, _) = grad_check(
            |g, x| {
                let p = g.maxpool2(x)?;
                Ok(g.sum(p))
            },
            &x,
            1e-3,
            1e-6,
        )
        .unwrap();
        assert!(
            report.excluded.contains(&(0, 1)),
            "tie coordinate should be excluded: {report:?}"
        );
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        // random 4x3 · 3x2 against the central-difference oracle
        let mut rng = crate::rng::SeededRng::from_seed(14);
        let a_data: Vec<f64> = (0..12).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let b_data: Vec<f64> = (0..6).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let a = TensorT::<f64>::new(vec![4, 3], a_data).unwrap();
        let b = TensorT::<f64>::new(vec![3, 2], b_data).unwrap();
        // d/dA of sum(A·B)
        let (report, _) = grad_check(
            |g, x| {
                let bn = g.constant(&b)?;
                let c = g.matmul(x, bn)?;
                Ok(g.sum(c))
            },
            &a,
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
        // d/dB of sum(A·B)
        let (report_b, _) = grad_check(
            |g, x| {
                let an = g.constant(&a)?;
                let c = g.matmul(an, x)?;
                Ok(g.sum(c))
            },
            &b,
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report_b.max_rel_err <= 1e-3, "{report_b:?}");
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        // random 2x2x5x5 input, 3x2x3x3 kernel: input, kernel, and bias
        let mut rng = crate::rng::SeededRng::from_seed(15);
        let x_data: Vec<f64> = (0..2 * 2 * 25).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let w_data: Vec<f64> = (0..3 * 2 * 9).map(|_| rng.range_f64(-0.5, 0.5)).collect();
        let b_data: Vec<f64> = (0..3).map(|_| rng.range_f64(-0.2, 0.2)).collect();
        let x = TensorT::<f64>::new(vec![2, 2, 5, 5], x_data).unwrap();
        let w = TensorT::<f64>::new(vec![3, 2, 3, 3], w_data).unwrap();
        let b = TensorT::<f64>::new(vec![3], b_data).unwrap();

        // weight the output sum so gradients are not all-ones-trivial;
        // padding 1 keeps the 5x5 spatial extent
        let weights: Vec<f64> = (0..2 * 3 * 25).map(|i| ((i % 7) as f64 - 3.0) / 3.0).collect();
        let wt = TensorT::<f64>::new(vec![2, 3, 5, 5], weights).unwrap();

        for (idx, tensor) in [&x, &w, &b].into_iter().enumerate() {
            let (report, _) = grad_check(
                |g, t| {
                    let (xn, wn, bn) = match idx {
                        0 => (t, g.constant(&w)?, g.constant(&b)?),
                        1 => (g.constant(&x)?, t, g.constant(&b)?),
                        _ => (g.constant(&x)?, g.constant(&w)?, t),
                    };
                    let c = g.conv2d(xn, wn, bn, 1, 1)?;
                    let mask = g.constant(&wt)?;
                    let prod = g.mul(c, mask)?;
                    Ok(g.sum(prod))
                },
                tensor,
                1e-5,
                1e-9,
            )
            .unwrap();
            assert!(report.max_rel_err <= 1e-3, "operand {idx}: {report:?}");
        }
    }

    #[test]
    fn maxpool_gradient_matches_finite_differences() {
        let mut rng = crate::rng::SeededRng::from_seed(16);
        let data: Vec<f64> = (0..32).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let x = TensorT::<f64>::new(vec![1, 2, 4, 4], data).unwrap();
        let (report, checks) = grad_check(
            |g, x| {
                let p = g.maxpool2(x)?;
                Ok(g.sum(p))
            },
            &x,
            1e-6,
            1e-9,
        )
        .unwrap();
        // random draws are tie-free with probability 1
        assert!(checks.iter().all(|c| c.passes(1e-9, 1e-3)), "{report:?}");
    }

    #[test]
    fn batchnorm_normalizes_and_matches_finite_differences() {
        // random 8x4 batch: per-channel output stats, then the gradient
        let mut rng = crate::rng::SeededRng::from_seed(17);
        let data: Vec<f64> = (0..32).map(|_| rng.range_f64(-2.0, 2.0)).collect();
        let x = TensorT::<f64>::new(vec![8, 4], data).unwrap();
        let gamma = TensorT::<f64>::new(vec![4], vec![1.0; 4]).unwrap();
        let beta = TensorT::<f64>::new(vec![4], vec![0.0; 4]).unwrap();

        let mut g = crate::autograd::GraphT::<f64>::new();
        let xn = g.constant(&x).unwrap();
        let gn = g.constant(&gamma).unwrap();
        let bn = g.constant(&beta).unwrap();
        let mut rm = vec![0.0f64; 4];
        let mut rv = vec![1.0f64; 4];
        let y = g
            .batchnorm(xn, gn, bn, &mut rm, &mut rv, crate::autograd::Mode::Train, 0.9, 1e-8)
            .unwrap();
        let out = g.value(y);
        for ch in 0..4 {
            let col: Vec<f64> = (0..8).map(|r| out[r * 4 + ch]).collect();
            let mean: f64 = col.iter().sum::<f64>() / 8.0;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-4, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "channel {ch} var {var}");
        }

        // gradient w.r.t. the input through a weighted sum
        let weights: Vec<f64> = (0..32).map(|i| ((i % 5) as f64 - 2.0) / 2.0).collect();
        let wt = TensorT::<f64>::new(vec![8, 4], weights).unwrap();
        let (report, _) = grad_check(
            |g, t| {
                let gn = g.constant(&gamma)?;
                let bn = g.constant(&beta)?;
                let mut rm = vec![0.0f64; 4];
                let mut rv = vec![1.0f64; 4];
                let y = g.batchnorm(t, gn, bn, &mut rm, &mut rv, crate::autograd::Mode::Train, 0.9, 1e-8)?;
                let mask = g.constant(&wt)?;
                let prod = g.mul(y, mask)?;
                Ok(g.sum(prod))
            },
            &x,
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let mut rng = crate::rng::SeededRng::from_seed(18);
        let data: Vec<f64> = (0..10).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let target_data: Vec<f64> = (0..10).map(|_| rng.range_f64(-1.0, 1.0)).collect();
        let pred = TensorT::<f64>::new(vec![2, 5], data).unwrap();
        let target = TensorT::<f64>::new(vec![2, 5], target_data).unwrap();
        let (report, _) = grad_check(
            |g, p| g.mse(p, &target),
            &pred,
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_rel_err <= 1e-3, "{report:?}");
    }

    #[test]
    fn nondeterminism_is_detected() {
        use std::cell::Cell;
        let flip = Cell::new(false);
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let coords = [(0usize, 0usize)];
        let mut eval = |params: &[Tensor], _want: bool| {
            flip.set(!flip.get());
            let jitter = if flip.get() { 0.0 } else { 1e-3 };
            Ok((
                params[0].data().iter().map(|v| *v as f64).sum::<f64>() + jitter,
                None,
            ))
        };
        let err =
            grad_check_params(&mut eval, &[x], &coords, FdOptions::central(1e-3, 1e-6)).unwrap_err();
        assert!(matches!(err, Error::OracleInvalid(_)));
    }
}
