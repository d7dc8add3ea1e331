//! Loop kernels behind the graph ops. Pure functions over slices so the
//! eval path and the recorded-graph path share one implementation.

use crate::scalar::Scalar;

/// C[m,n] = A[m,k] · B[k,n]
pub fn matmul_nn<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for ci in c.iter_mut() {
        *ci = S::ZERO;
    }
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * *bv;
            }
        }
    }
}

/// Dot product with eight accumulator lanes. The lane structure fixes the
/// summation order, so results stay bit-deterministic while the compiler
/// is free to vectorize.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut lanes = [S::ZERO; 8];
    let tail = a.len() - a.len() % 8;
    for i in (0..tail).step_by(8) {
        for l in 0..8 {
            lanes[l] += a[i + l] * b[i + l];
        }
    }
    let mut acc = S::ZERO;
    for i in tail..a.len() {
        acc += a[i] * b[i];
    }
    let pair0 = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    let pair1 = (lanes[4] + lanes[5]) + (lanes[6] + lanes[7]);
    (pair0 + pair1) + acc
}

/// C[m,n] = A[m,k] · B[n,k]ᵀ
pub fn matmul_nt<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for j in 0..n {
            crow[j] = dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// C[k,n] += A[m,k]ᵀ · B[m,n]  (accumulating variant, used by backward)
pub fn matmul_tn_acc<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize, c: &mut [S]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += aip * *bv;
            }
        }
    }
}

pub struct ConvDims {
    pub batch: usize,
    pub in_ch: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_ch: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    pub fn col_rows(&self) -> usize {
        self.in_ch * self.k_h * self.k_w
    }
    pub fn col_cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfold one sample [C,H,W] into a [C·kh·kw, H'·W'] patch matrix,
/// zero-filling out-of-frame taps.
pub fn im2col<S: Scalar>(input: &[S], d: &ConvDims, col: &mut [S]) {
    let (h, w) = (d.in_h, d.in_w);
    let cols = d.col_cols();
    debug_assert_eq!(input.len(), d.in_ch * h * w);
    debug_assert_eq!(col.len(), d.col_rows() * cols);
    let fast = d.padding == 0 && d.stride == 1;
    let pad = d.padding as isize;
    for c in 0..d.in_ch {
        let plane = &input[c * h * w..(c + 1) * h * w];
        for kh in 0..d.k_h {
            for kw in 0..d.k_w {
                let row = (c * d.k_h + kh) * d.k_w + kw;
                let out_row = &mut col[row * cols..(row + 1) * cols];
                if fast {
                    // every tap lands in-frame: contiguous row copies
                    for oh in 0..d.out_h {
                        let src = (oh + kh) * w + kw;
                        out_row[oh * d.out_w..(oh + 1) * d.out_w]
                            .copy_from_slice(&plane[src..src + d.out_w]);
                    }
                    continue;
                }
                for oh in 0..d.out_h {
                    let iy = (oh * d.stride) as isize - pad + kh as isize;
                    let base = oh * d.out_w;
                    if iy < 0 || iy >= h as isize {
                        for ow in 0..d.out_w {
                            out_row[base + ow] = S::ZERO;
                        }
                        continue;
                    }
                    let irow = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for ow in 0..d.out_w {
                        let ix = (ow * d.stride) as isize - pad + kw as isize;
                        out_row[base + ow] = if ix < 0 || ix >= w as isize {
                            S::ZERO
                        } else {
                            irow[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Scatter-add a patch-matrix gradient back onto one input sample.
pub fn col2im_acc<S: Scalar>(col: &[S], d: &ConvDims, input_grad: &mut [S]) {
    let (h, w) = (d.in_h, d.in_w);
    let cols = d.col_cols();
    debug_assert_eq!(input_grad.len(), d.in_ch * h * w);
    debug_assert_eq!(col.len(), d.col_rows() * cols);
    let fast = d.padding == 0 && d.stride == 1;
    let pad = d.padding as isize;
    for c in 0..d.in_ch {
        let plane = &mut input_grad[c * h * w..(c + 1) * h * w];
        for kh in 0..d.k_h {
            for kw in 0..d.k_w {
                let row = (c * d.k_h + kh) * d.k_w + kw;
                let col_row = &col[row * cols..(row + 1) * cols];
                if fast {
                    for oh in 0..d.out_h {
                        let dst = (oh + kh) * w + kw;
                        let dst_row = &mut plane[dst..dst + d.out_w];
                        let src_row = &col_row[oh * d.out_w..(oh + 1) * d.out_w];
                        for (dv, sv) in dst_row.iter_mut().zip(src_row) {
                            *dv += *sv;
                        }
                    }
                    continue;
                }
                for oh in 0..d.out_h {
                    let iy = (oh * d.stride) as isize - pad + kh as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let irow = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    let base = oh * d.out_w;
                    for ow in 0..d.out_w {
                        let ix = (ow * d.stride) as isize - pad + kw as isize;
                        if ix >= 0 && ix < w as isize {
                            irow[ix as usize] += col_row[base + ow];
                        }
                    }
                }
            }
        }
    }
}

/// 2×2/stride-2 max pooling over [N,C,H,W]; `argmax` records, per output
/// element, the flat input index that won (first index wins ties).
pub fn maxpool2<S: Scalar>(
    input: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    out: &mut [S],
    argmax: &mut [u32],
) {
    let (oh, ow) = (h / 2, w / 2);
    debug_assert_eq!(out.len(), n * c * oh * ow);
    for img in 0..n * c {
        let plane = &input[img * h * w..(img + 1) * h * w];
        let out_plane = &mut out[img * oh * ow..(img + 1) * oh * ow];
        let arg_plane = &mut argmax[img * oh * ow..(img + 1) * oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let base = (2 * y) * w + 2 * x;
                // row-major scan keeps the first maximal element on ties
                let mut best = plane[base];
                let mut best_idx = base;
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = base + dy * w + dx;
                    if plane[idx] > best {
                        best = plane[idx];
                        best_idx = idx;
                    }
                }
                out_plane[y * ow + x] = best;
                arg_plane[y * ow + x] = (img * h * w + best_idx) as u32;
            }
        }
    }
}

/// Per-channel mean/variance over [N,C,L] layout (L = spatial product).
/// Returns biased variance, matching the normalization statistic.
pub fn channel_stats<S: Scalar>(
    x: &[S],
    n: usize,
    c: usize,
    l: usize,
    mean: &mut [S],
    var: &mut [S],
) {
    let m = (n * l) as f64;
    for ch in 0..c {
        let mut sum = 0.0f64;
        for img in 0..n {
            let base = (img * c + ch) * l;
            for v in &x[base..base + l] {
                sum += v.to_f64();
            }
        }
        let mu = sum / m;
        let mut acc = 0.0f64;
        for img in 0..n {
            let base = (img * c + ch) * l;
            for v in &x[base..base + l] {
                let d = v.to_f64() - mu;
                acc += d * d;
            }
        }
        mean[ch] = S::from_f64(mu);
        var[ch] = S::from_f64(acc / m);
    }
}
