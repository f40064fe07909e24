//! Dense `N x C x H x W` tensors and the forward/backward kernels of the network.

use rand::Rng;

use crate::model::real::{gemm, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(n: usize, c: usize, h: usize, w: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * c * h * w, "tensor data length");
        Self { n, c, h, w, data }
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn sample_len(&self) -> usize {
        self.c * self.h * self.w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> T {
        self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, y: usize, x: usize) -> &mut T {
        &mut self.data[((n * self.c + c) * self.h + y) * self.w + x]
    }

    pub fn sample(&self, n: usize) -> &[T] {
        let l = self.sample_len();
        &self.data[n * l..(n + 1) * l]
    }

    pub fn sample_mut(&mut self, n: usize) -> &mut [T] {
        let l = self.sample_len();
        &mut self.data[n * l..(n + 1) * l]
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|&x| U::of(x.to_f64().expect("finite"))).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.shape(), other.shape(), "add shapes");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Convolution geometry: square kernel, symmetric zero padding `k / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
}

impl ConvShape {
    pub fn pad(&self) -> usize {
        self.k / 2
    }

    pub fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let p = self.pad();
        ((h + 2 * p - self.k) / self.stride + 1, (w + 2 * p - self.k) / self.stride + 1)
    }

    pub fn weight_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn is_pointwise(&self) -> bool {
        self.k == 1 && self.stride == 1
    }
}

/// Unfold one sample `cin x h x w` into `(cin*k*k) x (ho*wo)` columns.
fn im2col<T: Real>(x: &[T], s: &ConvShape, h: usize, w: usize, cols: &mut [T]) {
    let (ho, wo) = s.out_hw(h, w);
    let p = s.pad() as isize;
    let mut row = 0;
    for c in 0..s.cin {
        let plane = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s.stride) as isize + ky as isize - p;
                    let line = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, out) in line.iter_mut().enumerate() {
                        let ix = (ox * s.stride) as isize + kx as isize - p;
                        *out = if ix < 0 || ix >= w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Fold columns back, accumulating into `dx` (`cin x h x w`).
fn col2im<T: Real>(cols: &[T], s: &ConvShape, h: usize, w: usize, dx: &mut [T]) {
    let (ho, wo) = s.out_hw(h, w);
    let p = s.pad() as isize;
    let mut row = 0;
    for c in 0..s.cin {
        let plane = &mut dx[c * h * w..(c + 1) * h * w];
        for ky in 0..s.k {
            for kx in 0..s.k {
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * s.stride) as isize + ky as isize - p;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * s.stride) as isize + kx as isize - p;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// `y = conv(x, weight) + bias`; weight is `cout x cin x k x k`.
pub fn conv2d<T: Real>(x: &Tensor<T>, s: &ConvShape, weight: &[T], bias: &[T]) -> Tensor<T> {
    assert_eq!(x.c, s.cin, "conv input channels");
    let (ho, wo) = s.out_hw(x.h, x.w);
    let kk = s.cin * s.k * s.k;
    let mut y = Tensor::zeros(x.n, s.cout, ho, wo);
    let mut cols = if s.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * ho * wo] };
    for n in 0..x.n {
        let out = y.sample_mut(n);
        for (co, plane) in out.chunks_exact_mut(ho * wo).enumerate() {
            plane.fill(bias[co]);
        }
        let b = if s.is_pointwise() {
            x.sample(n)
        } else {
            im2col(x.sample(n), s, x.h, x.w, &mut cols);
            &cols
        };
        gemm(s.cout, kk, ho * wo, weight, false, b, false, T::one(), out);
    }
    y
}

/// Accumulate weight/bias gradients and return `dL/dx` when `need_dx`.
pub fn conv2d_backward<T: Real>(
    x: &Tensor<T>,
    s: &ConvShape,
    weight: &[T],
    dy: &Tensor<T>,
    dweight: &mut [T],
    dbias: &mut [T],
    need_dx: bool,
) -> Option<Tensor<T>> {
    let (ho, wo) = (dy.h, dy.w);
    let kk = s.cin * s.k * s.k;
    let mut dx = need_dx.then(|| Tensor::zeros(x.n, x.c, x.h, x.w));
    let mut cols = if s.is_pointwise() { Vec::new() } else { vec![T::zero(); kk * ho * wo] };
    let mut dcols = if need_dx && !s.is_pointwise() { vec![T::zero(); kk * ho * wo] } else { Vec::new() };
    for n in 0..x.n {
        let g = dy.sample(n);
        for (co, plane) in g.chunks_exact(ho * wo).enumerate() {
            dbias[co] += plane.iter().copied().sum::<T>();
        }
        let b = if s.is_pointwise() {
            x.sample(n)
        } else {
            im2col(x.sample(n), s, x.h, x.w, &mut cols);
            &cols
        };
        // dW (cout x kk) += dY (cout x P) * B^T (P x kk)
        gemm(s.cout, ho * wo, kk, g, false, b, true, T::one(), dweight);
        if let Some(dx) = dx.as_mut() {
            if s.is_pointwise() {
                gemm(kk, s.cout, ho * wo, weight, true, g, false, T::zero(), dx.sample_mut(n));
            } else {
                gemm(kk, s.cout, ho * wo, weight, true, g, false, T::zero(), &mut dcols);
                col2im(&dcols, s, x.h, x.w, dx.sample_mut(n));
            }
        }
    }
    dx
}

pub fn relu<T: Real>(mut x: Tensor<T>) -> Tensor<T> {
    for v in &mut x.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    x
}

/// Gradient through a ReLU given its output `y`.
pub fn relu_backward<T: Real>(y: &Tensor<T>, mut dy: Tensor<T>) -> Tensor<T> {
    for (g, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::zero() {
            *g = T::zero();
        }
    }
    dy
}

/// Concatenate along channels.
pub fn concat<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let first = parts[0];
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Tensor::zeros(first.n, c, first.h, first.w);
    for n in 0..first.n {
        let mut off = 0;
        let dst = out.sample_mut(n);
        for p in parts {
            assert_eq!((p.n, p.h, p.w), (first.n, first.h, first.w), "concat shapes");
            let src = p.sample(n);
            dst[off..off + src.len()].copy_from_slice(src);
            off += src.len();
        }
    }
    out
}

/// Split a channel-concatenated gradient into parts with `channels` each.
pub fn split_channels<T: Real>(x: &Tensor<T>, channels: &[usize]) -> Vec<Tensor<T>> {
    let mut out: Vec<Tensor<T>> = channels.iter().map(|&c| Tensor::zeros(x.n, c, x.h, x.w)).collect();
    for n in 0..x.n {
        let src = x.sample(n);
        let mut off = 0;
        for part in out.iter_mut() {
            let dst = part.sample_mut(n);
            dst.copy_from_slice(&src[off..off + dst.len()]);
            off += dst.len();
        }
    }
    out
}

pub fn upsample_nearest<T: Real>(x: &Tensor<T>, f: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, x.c, x.h * f, x.w * f);
    for n in 0..x.n {
        for c in 0..x.c {
            for oy in 0..y.h {
                for ox in 0..y.w {
                    *y.at_mut(n, c, oy, ox) = x.at(n, c, oy / f, ox / f);
                }
            }
        }
    }
    y
}

pub fn upsample_nearest_backward<T: Real>(dy: &Tensor<T>, f: usize) -> Tensor<T> {
    let mut dx = Tensor::zeros(dy.n, dy.c, dy.h / f, dy.w / f);
    for n in 0..dy.n {
        for c in 0..dy.c {
            for oy in 0..dy.h {
                for ox in 0..dy.w {
                    *dx.at_mut(n, c, oy / f, ox / f) += dy.at(n, c, oy, ox);
                }
            }
        }
    }
    dx
}

pub fn avg_pool<T: Real>(x: &Tensor<T>, f: usize) -> Tensor<T> {
    let mut y = Tensor::zeros(x.n, x.c, x.h / f, x.w / f);
    let scale = T::one() / T::of((f * f) as f64);
    for n in 0..x.n {
        for c in 0..x.c {
            for iy in 0..y.h * f {
                for ix in 0..y.w * f {
                    *y.at_mut(n, c, iy / f, ix / f) += x.at(n, c, iy, ix) * scale;
                }
            }
        }
    }
    y
}

pub fn avg_pool_backward<T: Real>(dy: &Tensor<T>, f: usize, h: usize, w: usize) -> Tensor<T> {
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    let scale = T::one() / T::of((f * f) as f64);
    for n in 0..dy.n {
        for c in 0..dy.c {
            for iy in 0..dy.h * f {
                for ix in 0..dy.w * f {
                    *dx.at_mut(n, c, iy, ix) = dy.at(n, c, iy / f, ix / f) * scale;
                }
            }
        }
    }
    dx
}

/// Linear interpolation taps `(i0, i1, w1)` for resizing `src` samples to `dst`
/// (half-pixel centers, edge-clamped).
fn linear_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let x = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (x.floor() as usize).min(src - 1);
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, x - i0 as f64)
        })
        .collect()
}

pub fn bilinear_resize<T: Real>(x: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let ty = linear_taps(x.h, h);
    let tx = linear_taps(x.w, w);
    let mut y = Tensor::zeros(x.n, x.c, h, w);
    for n in 0..x.n {
        for c in 0..x.c {
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::of(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::of(fx);
                    let top = x.at(n, c, y0, x0) * (T::one() - fx) + x.at(n, c, y0, x1) * fx;
                    let bot = x.at(n, c, y1, x0) * (T::one() - fx) + x.at(n, c, y1, x1) * fx;
                    *y.at_mut(n, c, oy, ox) = top * (T::one() - fy) + bot * fy;
                }
            }
        }
    }
    y
}

pub fn bilinear_resize_backward<T: Real>(dy: &Tensor<T>, h: usize, w: usize) -> Tensor<T> {
    let ty = linear_taps(h, dy.h);
    let tx = linear_taps(w, dy.w);
    let mut dx = Tensor::zeros(dy.n, dy.c, h, w);
    for n in 0..dy.n {
        for c in 0..dy.c {
            for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                let fy = T::of(fy);
                for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                    let fx = T::of(fx);
                    let g = dy.at(n, c, oy, ox);
                    *dx.at_mut(n, c, y0, x0) += g * (T::one() - fy) * (T::one() - fx);
                    *dx.at_mut(n, c, y0, x1) += g * (T::one() - fy) * fx;
                    *dx.at_mut(n, c, y1, x0) += g * fy * (T::one() - fx);
                    *dx.at_mut(n, c, y1, x1) += g * fy * fx;
                }
            }
        }
    }
    dx
}

/// Inverted dropout mask: 0 with probability `p`, else `1 / (1 - p)`.
pub fn dropout_mask<T: Real, R: Rng>(len: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
        .collect()
}

pub fn apply_mask<T: Real>(mut x: Tensor<T>, mask: &[T]) -> Tensor<T> {
    for (v, &m) in x.data.iter_mut().zip(mask) {
        *v *= m;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, s: &ConvShape, wgt: &[f64], b: &[f64]) -> Tensor<f64> {
        let (ho, wo) = s.out_hw(x.h, x.w);
        let p = s.pad() as isize;
        let mut y = Tensor::zeros(x.n, s.cout, ho, wo);
        for n in 0..x.n {
            for co in 0..s.cout {
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut acc = b[co];
                        for ci in 0..s.cin {
                            for ky in 0..s.k {
                                for kx in 0..s.k {
                                    let iy = (oy * s.stride) as isize + ky as isize - p;
                                    let ix = (ox * s.stride) as isize + kx as isize - p;
                                    if iy >= 0 && ix >= 0 && iy < x.h as isize && ix < x.w as isize {
                                        acc += wgt[((co * s.cin + ci) * s.k + ky) * s.k + kx]
                                            * x.at(n, ci, iy as usize, ix as usize);
                                    }
                                }
                            }
                        }
                        *y.at_mut(n, co, oy, ox) = acc;
                    }
                }
            }
        }
        y
    }

    fn ramp(n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919 % 101) as f64 / 50.0 - 1.0) * scale).collect()
    }

    #[test]
    fn conv_matches_direct_sum() {
        for (k, stride) in [(3, 1), (3, 2), (1, 1)] {
            let s = ConvShape { cin: 2, cout: 3, k, stride };
            let x = Tensor::from_vec(2, 2, 6, 5, ramp(120, 1.0));
            let w = ramp(s.weight_len(), 0.3);
            let b = vec![0.1, -0.2, 0.3];
            let y = conv2d(&x, &s, &w, &b);
            let r = naive_conv(&x, &s, &w, &b);
            assert_eq!(y.shape(), r.shape());
            for (a, b) in y.data.iter().zip(&r.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_backward_is_the_adjoint() {
        // <conv(x), g> is linear in x and in w, so its gradients follow from the adjoint.
        let s = ConvShape { cin: 2, cout: 3, k: 3, stride: 2 };
        let x = Tensor::from_vec(1, 2, 7, 6, ramp(84, 1.0));
        let w = ramp(s.weight_len(), 0.3);
        let zero_b = vec![0.0; 3];
        let y = conv2d(&x, &s, &w, &zero_b);
        let g = Tensor::from_vec(1, 3, y.h, y.w, ramp(y.data.len(), 0.7));
        let mut dw = vec![0.0; w.len()];
        let mut db = vec![0.0; 3];
        let dx = conv2d_backward(&x, &s, &w, &g, &mut dw, &mut db, true).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let lhs = dot(&y.data, &g.data);
        assert!((dot(&dx.data, &x.data) - lhs).abs() < 1e-9);
        assert!((dot(&dw, &w) - lhs).abs() < 1e-9);
        let gsum: Vec<f64> = g.data.chunks(y.h * y.w).map(|c| c.iter().sum()).collect();
        assert_eq!(db, gsum);
    }

    #[test]
    fn resampling_adjoints() {
        let x = Tensor::from_vec(1, 2, 4, 6, ramp(48, 1.0));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();

        let up = upsample_nearest(&x, 2);
        let g = Tensor::from_vec(1, 2, 8, 12, ramp(192, 0.5));
        assert!((dot(&up.data, &g.data) - dot(&upsample_nearest_backward(&g, 2).data, &x.data)).abs() < 1e-12);

        let pool = avg_pool(&x, 2);
        let g = Tensor::from_vec(1, 2, 2, 3, ramp(12, 0.5));
        assert!((dot(&pool.data, &g.data) - dot(&avg_pool_backward(&g, 2, 4, 6).data, &x.data)).abs() < 1e-12);

        let big = bilinear_resize(&x, 16, 24);
        let g = Tensor::from_vec(1, 2, 16, 24, ramp(768, 0.5));
        let dx = bilinear_resize_backward(&g, 4, 6);
        assert!((dot(&big.data, &g.data) - dot(&dx.data, &x.data)).abs() < 1e-10);
    }

    #[test]
    fn bilinear_resize_preserves_constants_and_ramps_inside() {
        let x = Tensor::from_vec(1, 1, 2, 2, vec![3.0, 3.0, 3.0, 3.0]);
        assert!(bilinear_resize(&x, 8, 8).data.iter().all(|&v| (v - 3.0f64).abs() < 1e-12));
        // Row ramp 0, 1: the half-pixel mapping puts output row 2 of 8 at source 0.125.
        let r = Tensor::from_vec(1, 1, 2, 1, vec![0.0, 1.0]);
        let y = bilinear_resize(&r, 8, 1);
        assert!((y.data[2] - 0.125f64).abs() < 1e-12);
        assert_eq!(y.data[0], 0.0);
        assert_eq!(y.data[7], 1.0);
    }

    #[test]
    fn concat_and_split_round_trip() {
        let a = Tensor::from_vec(2, 1, 2, 2, ramp(8, 1.0));
        let b = Tensor::from_vec(2, 3, 2, 2, ramp(24, 2.0));
        let c = concat(&[&a, &b]);
        assert_eq!(c.c, 4);
        let parts = split_channels(&c, &[1, 3]);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }
}
