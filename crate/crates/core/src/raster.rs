//! Small image helpers shared by the renderer, the matching pipeline and augmentation.
//!
//! Images are `ndarray` arrays indexed `[row, col]` (or `[row, col, channel]`),
//! with pixel centers at integer coordinates.

use ndarray::{Array2, Array3, ArrayView2, Axis};

/// Bilinear sample at continuous `(u, v)` = `(column, row)`.
///
/// Returns `None` when the sample location is outside `[0, W-1] x [0, H-1]`.
pub fn bilinear(img: ArrayView2<f32>, u: f64, v: f64) -> Option<f32> {
    let (h, w) = img.dim();
    if h == 0 || w == 0 || !u.is_finite() || !v.is_finite() {
        return None;
    }
    if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
        return None;
    }
    let u0 = (u.floor() as usize).min(w - 1);
    let v0 = (v.floor() as usize).min(h - 1);
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    let fu = (u - u0 as f64) as f32;
    let fv = (v - v0 as f64) as f32;
    let top = img[[v0, u0]] * (1.0 - fu) + img[[v0, u1]] * fu;
    let bottom = img[[v1, u0]] * (1.0 - fu) + img[[v1, u1]] * fu;
    Some(top * (1.0 - fv) + bottom * fv)
}

/// Bilinear sample with a validity mask: all contributing taps must be valid.
pub fn bilinear_masked(
    img: ArrayView2<f32>,
    valid: ArrayView2<bool>,
    u: f64,
    v: f64,
) -> Option<f32> {
    let (h, w) = img.dim();
    if u < 0.0 || v < 0.0 || u > (w - 1) as f64 || v > (h - 1) as f64 {
        return None;
    }
    let u0 = (u.floor() as usize).min(w - 1);
    let v0 = (v.floor() as usize).min(h - 1);
    let u1 = (u0 + 1).min(w - 1);
    let v1 = (v0 + 1).min(h - 1);
    if !(valid[[v0, u0]] && valid[[v0, u1]] && valid[[v1, u0]] && valid[[v1, u1]]) {
        return None;
    }
    bilinear(img, u, v)
}

/// Nearest-pixel index for a continuous coordinate, if inside `0..len`.
pub fn nearest_index(x: f64, len: usize) -> Option<usize> {
    let r = x.round();
    if r >= 0.0 && r < len as f64 {
        Some(r as usize)
    } else {
        None
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f32> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp() as f32)
        .collect();
    let sum: f32 = k.iter().sum();
    k.iter_mut().for_each(|x| *x /= sum);
    k
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(img: &Array2<f32>, sigma: f64) -> Array2<f32> {
    if sigma <= 0.0 {
        return img.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as isize;
    let (h, w) = img.dim();
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = Array2::<f32>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * img[[r, clamp(c as isize + k as isize - radius, w)]];
            }
            tmp[[r, c]] = acc;
        }
    }
    let mut out = Array2::<f32>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate() {
                acc += kv * tmp[[clamp(r as isize + k as isize - radius, h), c]];
            }
            out[[r, c]] = acc;
        }
    }
    out
}

/// Per-channel Gaussian blur of an `H x W x C` image.
pub fn gaussian_blur3(img: &Array3<f32>, sigma: f64) -> Array3<f32> {
    let mut out = img.clone();
    for (mut dst, src) in out.axis_iter_mut(Axis(2)).zip(img.axis_iter(Axis(2))) {
        dst.assign(&gaussian_blur(&src.to_owned(), sigma));
    }
    out
}
