use serde::{Deserialize, Serialize};

use crate::evaluation::metrics::{grip_stats, weighted_frame_rmse, FrameResiduals};
use crate::model::{batch_inputs, forward, modalities_label, GripMap, Mode, ModelParams};
use crate::pipeline::Sample;
use crate::{Error, Result};

/// Predicted `[grip, water, ice, snow]` at the labels of each sample.
pub type LabelPredictions = Vec<Vec<[f64; 4]>>;

/// Anything that predicts grip and layer thickness at a sample's label pixels.
pub trait LabelPredictor {
    fn name(&self) -> String;
    fn predict_labels(&self, samples: &[&Sample]) -> Result<LabelPredictions>;
}

/// Dense eval-mode predictions, `batch_size` samples per forward pass.
pub fn predict_maps(params: &ModelParams, samples: &[&Sample], batch_size: usize) -> Result<Vec<GripMap>> {
    let mut maps = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(batch_size.max(1)) {
        let y = forward(params, &batch_inputs(chunk, &params.config.modalities)?, Mode::Eval)?;
        maps.extend((0..chunk.len()).map(|n| GripMap::from_output(&y, n)));
    }
    Ok(maps)
}

/// A trained network evaluated in inference mode.
pub struct ModelPredictor<'a> {
    pub params: &'a ModelParams,
    pub batch_size: usize,
}

impl LabelPredictor for ModelPredictor<'_> {
    fn name(&self) -> String {
        modalities_label(&self.params.config.modalities)
    }

    fn predict_labels(&self, samples: &[&Sample]) -> Result<LabelPredictions> {
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(self.batch_size.max(1)) {
            let y = forward(self.params, &batch_inputs(chunk, &self.params.config.modalities)?, Mode::Eval)?;
            for (n, s) in chunk.iter().enumerate() {
                out.push(
                    s.labels
                        .iter()
                        .map(|l| std::array::from_fn(|c| y.at(n, c, l.v, l.u) as f64))
                        .collect(),
                );
            }
        }
        Ok(out)
    }
}

/// Returns the labels themselves.
pub struct OraclePredictor;

impl LabelPredictor for OraclePredictor {
    fn name(&self) -> String {
        "oracle".into()
    }

    fn predict_labels(&self, samples: &[&Sample]) -> Result<LabelPredictions> {
        Ok(samples
            .iter()
            .map(|s| s.labels.iter().map(|l| [l.grip, l.d_water, l.d_ice, l.d_snow]).collect())
            .collect())
    }
}

/// Predicts the same values everywhere.
pub struct ConstantPredictor(pub [f64; 4]);

impl LabelPredictor for ConstantPredictor {
    fn name(&self) -> String {
        "constant".into()
    }

    fn predict_labels(&self, samples: &[&Sample]) -> Result<LabelPredictions> {
        Ok(samples.iter().map(|s| vec![self.0; s.labels.len()]).collect())
    }
}

/// Grip residuals and raw weights per frame.
pub fn grip_residuals(samples: &[&Sample], predictions: &LabelPredictions) -> Result<Vec<FrameResiduals>> {
    if samples.len() != predictions.len() {
        return Err(Error::Input(format!(
            "{} samples, {} prediction sets",
            samples.len(),
            predictions.len()
        )));
    }
    samples
        .iter()
        .zip(predictions)
        .map(|(s, p)| {
            if s.labels.len() != p.len() {
                return Err(Error::Input(format!("{}: {} labels, {} predictions", s.id, s.labels.len(), p.len())));
            }
            Ok(FrameResiduals {
                residuals: s.labels.iter().zip(p).map(|(l, f)| f[0] - l.grip).collect(),
                weights: s.labels.iter().map(|l| l.weight_raw).collect(),
            })
        })
        .collect()
}

/// One row of a modality ablation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub modalities: String,
    pub set: String,
    pub grip_mean: f64,
    pub grip_sd: f64,
    pub n_samples: usize,
    pub rmse: f64,
    #[serde(skip)]
    pub frame_mse: Vec<f64>,
    #[serde(skip)]
    pub skipped: usize,
}

/// Label statistics and weighted per-frame RMSE of `predictor` on `samples`.
pub fn evaluate(predictor: &dyn LabelPredictor, samples: &[&Sample], set: &str) -> Result<EvalReport> {
    let stats = grip_stats(samples.iter().flat_map(|s| s.labels.iter().map(|l| l.grip)))?;
    let predictions = predictor.predict_labels(samples)?;
    let report = weighted_frame_rmse(&grip_residuals(samples, &predictions)?)?;
    Ok(EvalReport {
        modalities: predictor.name(),
        set: set.to_string(),
        grip_mean: stats.mean,
        grip_sd: stats.sd,
        n_samples: samples.len(),
        rmse: report.rmse,
        frame_mse: report.frame_mse,
        skipped: report.skipped,
    })
}
