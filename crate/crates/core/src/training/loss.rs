use crate::model::{Real, Tensor};
use crate::pipeline::{normalize_raw, SparseLabel};
use crate::{Error, Result};

/// Prediction gradient at one label pixel: `d loss / d (grip, water, ice, snow)`.
pub type PixelGrad = (usize, usize, [f64; 4]);

/// Weighted two-task loss of one frame and its gradient with respect to the predictions
/// sampled (nearest pixel) at the label locations:
/// `(1/N) sum w (y_p - f_p)^2 + lambda / (3N) sum_l sum w (y_l - f_l)^2`.
pub fn loss_and_grad(
    pred: impl Fn(usize, usize) -> [f64; 4],
    labels: &[SparseLabel],
    weights: &[f64],
    lambda: f64,
) -> Result<(f64, Vec<PixelGrad>)> {
    if labels.is_empty() {
        return Err(Error::DegenerateBatch("no labels".into()));
    }
    assert_eq!(labels.len(), weights.len(), "one weight per label");
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grads = Vec::with_capacity(labels.len());
    for (l, &w) in labels.iter().zip(weights) {
        let f = pred(l.u, l.v);
        let targets = [l.grip, l.d_water, l.d_ice, l.d_snow];
        let mut g = [0.0; 4];
        for c in 0..4 {
            let scale = if c == 0 { w / n } else { lambda * w / (3.0 * n) };
            let r = f[c] - targets[c];
            loss += scale * r * r;
            g[c] = 2.0 * scale * r;
        }
        grads.push((l.u, l.v, g));
    }
    Ok((loss, grads))
}

pub fn loss(pred: impl Fn(usize, usize) -> [f64; 4], labels: &[SparseLabel], weights: &[f64], lambda: f64) -> Result<f64> {
    loss_and_grad(pred, labels, weights, lambda).map(|(l, _)| l)
}

fn at<T: Real>(y: &Tensor<T>, n: usize) -> impl Fn(usize, usize) -> [f64; 4] + '_ {
    move |u, v| std::array::from_fn(|c| y.at(n, c, v, u).to_f64().expect("finite"))
}

/// Batch loss: mean of per-frame losses over frames with at least one positive weight,
/// with mean-one weights per frame. Returns the loss, `dL/dy` and the frames used.
pub fn batch_loss_and_grad<T: Real>(
    y: &Tensor<T>,
    labels: &[&[SparseLabel]],
    lambda: f64,
) -> Result<(f64, Tensor<T>, usize)> {
    assert_eq!(y.n, labels.len(), "one label set per batch item");
    let mut per_frame = Vec::new();
    for (n, ls) in labels.iter().enumerate() {
        let raw: Vec<f64> = ls.iter().map(|l| l.weight_raw).collect();
        let Ok(w) = normalize_raw(&raw) else { continue };
        let (l, g) = loss_and_grad(at(y, n), ls, &w, lambda)?;
        per_frame.push((n, l, g));
    }
    if per_frame.is_empty() {
        return Err(Error::DegenerateBatch("no frame in the batch has weighted labels".into()));
    }
    let m = per_frame.len() as f64;
    let mut dy = Tensor::zeros(y.n, y.c, y.h, y.w);
    let mut total = 0.0;
    for (n, l, g) in &per_frame {
        total += l / m;
        for &(u, v, gp) in g {
            for (c, gc) in gp.iter().enumerate() {
                *dy.at_mut(*n, c, v, u) += T::of(gc / m);
            }
        }
    }
    Ok((total, dy, per_frame.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(grip: f64, water: f64) -> SparseLabel {
        SparseLabel {
            u: 1,
            v: 2,
            grip,
            d_water: water,
            d_ice: 0.0,
            d_snow: 0.0,
            weight_raw: 1.0,
        }
    }

    #[test]
    fn worked_examples() {
        let exact = |_, _| [0.5, 1.0, 0.0, 0.0];
        assert_eq!(loss(exact, &[label(0.5, 1.0)], &[1.0], 1.0).unwrap(), 0.0);
        let grip_off = |_, _| [0.7, 1.0, 0.0, 0.0];
        assert!((loss(grip_off, &[label(0.5, 1.0)], &[1.0], 1.0).unwrap() - 0.04).abs() < 1e-12);
        let water_off = |_, _| [0.5, 2.0, 0.0, 0.0];
        assert!((loss(water_off, &[label(0.5, 1.0)], &[1.0], 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(loss(exact, &[], &[], 1.0), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn batch_skips_unweighted_frames() {
        let y = Tensor::<f64>::zeros(2, 4, 4, 4);
        let mut zero = label(0.2, 0.0);
        zero.weight_raw = 0.0;
        let a = [label(0.1, 0.0)];
        let b = [zero];
        let (l, _, used) = batch_loss_and_grad(&y, &[&a, &b], 1.0).unwrap();
        assert_eq!(used, 1);
        assert!((l - 0.01).abs() < 1e-12);
        assert!(batch_loss_and_grad(&y, &[&b, &b], 1.0).is_err());
    }
}
