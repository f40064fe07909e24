use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Residuals `prediction - truth` at the labels of one frame and their raw weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameResiduals {
    pub residuals: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FrameResiduals {
    /// Weighted MSE with mean-one weights, or `None` without weighted labels.
    pub fn weighted_mse(&self) -> Option<f64> {
        assert_eq!(self.residuals.len(), self.weights.len(), "one weight per residual");
        let total: f64 = self.weights.iter().sum();
        if self.residuals.is_empty() || total <= 0.0 {
            return None;
        }
        let sum: f64 = self.residuals.iter().zip(&self.weights).map(|(r, w)| w * r * r).sum();
        Some(sum / total)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RmseReport {
    pub rmse: f64,
    pub frame_mse: Vec<f64>,
    /// Frames without weighted labels, excluded from the mean.
    pub skipped: usize,
}

/// Square root of the mean over frames of the per-frame weighted MSE.
pub fn weighted_frame_rmse(frames: &[FrameResiduals]) -> Result<RmseReport> {
    let mut frame_mse = Vec::with_capacity(frames.len());
    let mut skipped = 0;
    for f in frames {
        match f.weighted_mse() {
            Some(m) => frame_mse.push(m),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} of {} frames have no weighted labels and are excluded", frames.len());
    }
    if frame_mse.is_empty() {
        return Err(Error::DegenerateBatch("no frame has weighted labels".into()));
    }
    let rmse = (frame_mse.iter().sum::<f64>() / frame_mse.len() as f64).sqrt();
    Ok(RmseReport { rmse, frame_mse, skipped })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GripStats {
    pub mean: f64,
    /// Population standard deviation.
    pub sd: f64,
    pub count: usize,
}

/// Unweighted mean and standard deviation of label grips.
pub fn grip_stats(grips: impl IntoIterator<Item = f64>) -> Result<GripStats> {
    let values: Vec<f64> = grips.into_iter().collect();
    if values.is_empty() {
        return Err(Error::DegenerateStatistics("no labels".into()));
    }
    let n = values.len() as f64;
    let rough = values.iter().sum::<f64>() / n;
    let mean = rough + values.iter().map(|g| g - rough).sum::<f64>() / n;
    let var = values.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / n;
    Ok(GripStats {
        mean,
        sd: var.sqrt(),
        count: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(residuals: &[f64]) -> FrameResiduals {
        FrameResiduals {
            residuals: residuals.to_vec(),
            weights: vec![1.0; residuals.len()],
        }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(weighted_frame_rmse(&[frame(&[0.0, 0.0])]).unwrap().rmse, 0.0);
        let r = weighted_frame_rmse(&[frame(&[0.1]), frame(&[0.3])]).unwrap();
        assert!((r.rmse - 0.05f64.sqrt()).abs() < 1e-15);
        assert!((r.rmse - 0.223_606_797_7).abs() < 1e-9);
    }

    #[test]
    fn unlabeled_frames_are_counted_and_skipped() {
        let r = weighted_frame_rmse(&[frame(&[0.2]), frame(&[])]).unwrap();
        assert_eq!(r.skipped, 1);
        assert!((r.rmse - 0.2).abs() < 1e-15);
        assert!(weighted_frame_rmse(&[frame(&[])]).is_err());
    }

    #[test]
    fn stats_examples() {
        let s = grip_stats([0.82; 7]).unwrap();
        assert_eq!((s.mean, s.sd), (0.82, 0.0));
        let s = grip_stats([0.82, 0.35, 0.82, 0.35]).unwrap();
        assert!((s.mean - 0.585).abs() < 1e-12 && (s.sd - 0.235).abs() < 1e-12);
        assert_eq!(grip_stats([0.4]).unwrap().sd, 0.0);
        assert!(grip_stats([]).is_err());
    }

    #[test]
    fn constant_predictor_is_best_at_the_weighted_mean() {
        let truth = [0.1, 0.5, 0.9, 0.3];
        let weights = [0.5, 2.0, 1.0, 0.5];
        let mean = truth.iter().zip(&weights).map(|(t, w)| t * w).sum::<f64>() / weights.iter().sum::<f64>();
        let rmse = |c: f64| {
            let f = FrameResiduals {
                residuals: truth.iter().map(|t| c - t).collect(),
                weights: weights.to_vec(),
            };
            weighted_frame_rmse(&[f]).unwrap().rmse
        };
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .min_by(|a, b| rmse(*a).total_cmp(&rmse(*b)))
            .unwrap();
        assert!((best - mean).abs() <= 5e-4, "{best} vs {mean}");
    }
}
