//! The rotate / shift / zoom augmentation recipe.
//!
//! Each draw rotates by θ ~ U(−45°, 45°), shifts by up to ±20% of each
//! side, and zooms in by center-cropping to a uniformly drawn 80–90% of
//! each side before resampling back. The three stages compose into one
//! inverse-mapped bilinear pass with zero fill.

use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct AugmentSpec {
    /// Rotation bound in degrees (both directions).
    pub rotate_deg: f64,
    /// Shift bound as a fraction of width/height (both directions).
    pub shift_frac: f64,
    /// Zoom-in crop range as a fraction of each side.
    pub zoom: (f64, f64),
    /// Draw rotation from {−bound, +bound} instead of the continuous range.
    pub discrete_rotation: bool,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            rotate_deg: 45.0,
            shift_frac: 0.2,
            zoom: (0.8, 0.9),
            discrete_rotation: false,
        }
    }
}

impl AugmentSpec {
    /// No-op configuration; `apply` returns the input unchanged.
    pub fn identity() -> Self {
        Self {
            rotate_deg: 0.0,
            shift_frac: 0.0,
            zoom: (1.0, 1.0),
            discrete_rotation: false,
        }
    }
}

/// One sampled transform. Draw order is rotation, shift x, shift y, zoom.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AugmentDraw {
    pub theta_deg: f64,
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
}

impl AugmentDraw {
    pub fn sample(spec: &AugmentSpec, rng: &mut SeededRng) -> Self {
        let theta_deg = if spec.discrete_rotation && spec.rotate_deg > 0.0 {
            if rng.below(2) == 0 {
                -spec.rotate_deg
            } else {
                spec.rotate_deg
            }
        } else {
            rng.range_f64(-spec.rotate_deg, spec.rotate_deg)
        };
        let shift_x = rng.range_f64(-spec.shift_frac, spec.shift_frac);
        let shift_y = rng.range_f64(-spec.shift_frac, spec.shift_frac);
        let scale = rng.range_f64(spec.zoom.0, spec.zoom.1);
        Self {
            theta_deg,
            shift_x,
            shift_y,
            scale,
        }
    }

    pub fn identity() -> Self {
        Self {
            theta_deg: 0.0,
            shift_x: 0.0,
            shift_y: 0.0,
            scale: 1.0,
        }
    }
}

fn bilinear(plane: &[f32], h: usize, w: usize, y: f64, x: f64) -> f32 {
    if !(0.0..=(w - 1) as f64).contains(&x) || !(0.0..=(h - 1) as f64).contains(&y) {
        // allow the fractional border
        if x <= -1.0 || y <= -1.0 || x >= w as f64 || y >= h as f64 {
            return 0.0;
        }
    }
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = (x - x0) as f32;
    let fy = (y - y0) as f32;
    let sample = |yy: i64, xx: i64| -> f32 {
        if yy < 0 || xx < 0 || yy >= h as i64 || xx >= w as i64 {
            0.0
        } else {
            plane[yy as usize * w + xx as usize]
        }
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    let p00 = sample(y0, x0);
    let p01 = sample(y0, x0 + 1);
    let p10 = sample(y0 + 1, x0);
    let p11 = sample(y0 + 1, x0 + 1);
    let top = p00 * (1.0 - fx) + p01 * fx;
    let bottom = p10 * (1.0 - fx) + p11 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Apply a drawn transform to one `[C, H, W]` image.
pub fn apply(image: &[f32], channels: usize, h: usize, w: usize, draw: &AugmentDraw) -> Vec<f32> {
    let theta = draw.theta_deg.to_radians();
    let (sin_t, cos_t) = theta.sin_cos();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let dx = draw.shift_x * w as f64;
    let dy = draw.shift_y * h as f64;
    let mut out = vec![0.0f32; channels * h * w];
    for c in 0..channels {
        let plane = &image[c * h * w..(c + 1) * h * w];
        let out_plane = &mut out[c * h * w..(c + 1) * h * w];
        for oy in 0..h {
            for ox in 0..w {
                // invert zoom (center crop of `scale` per side, resampled back)
                let zx = cx + (ox as f64 - cx) * draw.scale;
                let zy = cy + (oy as f64 - cy) * draw.scale;
                // invert shift
                let sx = zx - dx;
                let sy = zy - dy;
                // invert rotation about the center
                let rx = cx + cos_t * (sx - cx) + sin_t * (sy - cy);
                let ry = cy - sin_t * (sx - cx) + cos_t * (sy - cy);
                let v = bilinear(plane, h, w, ry, rx);
                out_plane[oy * w + ox] = v.clamp(0.0, 1.0);
            }
        }
    }
    out
}

/// Draw a transform from `rng` and apply it.
pub fn augment_image(
    image: &[f32],
    channels: usize,
    h: usize,
    w: usize,
    spec: &AugmentSpec,
    rng: &mut SeededRng,
) -> Vec<f32> {
    let draw = AugmentDraw::sample(spec, rng);
    apply(image, channels, h, w, &draw)
}

/// Augment a whole tensor of images `[N, C, H, W]`, one fresh draw per
/// image, deterministically derived from `seed` and the image index.
pub fn augment_batch(images: &Tensor, spec: &AugmentSpec, seed: u64) -> Tensor {
    let shape = images.shape().to_vec();
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let stride = c * h * w;
    let mut out = Vec::with_capacity(images.numel());
    for i in 0..n {
        let mut rng = SeededRng::from_parts(&[seed, 0xa06, i as u64]);
        let img = &images.data()[i * stride..(i + 1) * stride];
        out.extend(augment_image(img, c, h, w, spec, &mut rng));
    }
    Tensor::new(shape, out).expect("augmented batch is well-formed")
}
