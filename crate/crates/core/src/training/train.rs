use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{grip_residuals, weighted_frame_rmse, LabelPredictor, ModelPredictor};
use crate::model::{backward, batch_inputs, forward_cached, init_model, Mode, ModelConfig, ModelParams};
use crate::pipeline::{normalize_raw, Sample};
use crate::synth::derive_seed;
use crate::training::augment::{augment, AugmentConfig};
use crate::training::loss::{batch_loss_and_grad, loss};
use crate::training::optim::{Adam, AdamConfig};
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x1417;
const SHUFFLE_STREAM: u64 = 0x5417;
const AUGMENT_STREAM: u64 = 0xA06;
const DROPOUT_STREAM: u64 = 0xD50;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lambda_aux: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Anneal the learning rate from `learning_rate` towards zero over `epochs` on a
    /// half cosine; off means constant.
    pub cosine_decay: bool,
    pub adam: AdamConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_aux: 1.0,
            epochs: 38,
            batch_size: 32,
            learning_rate: 1e-3,
            cosine_decay: false,
            adam: AdamConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        // Zero is accepted for the learning rate: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and >= 0", self.learning_rate)));
        }
        if !(self.lambda_aux >= 0.0 && self.lambda_aux.is_finite()) {
            return Err(Error::Config(format!("lambda_aux {} must be finite and >= 0", self.lambda_aux)));
        }
        self.augment.validate()
    }

    /// Learning rate used throughout epoch `epoch` (zero-based).
    pub fn epoch_learning_rate(&self, epoch: usize) -> f64 {
        if !self.cosine_decay {
            return self.learning_rate;
        }
        let progress = epoch.min(self.epochs) as f64 / self.epochs as f64;
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rmse: f64,
    /// Wall-clock time of the epoch; the only non-deterministic column.
    pub seconds: f64,
}

pub fn write_epoch_logs(path: &Path, logs: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for l in logs {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_epoch_logs(path: &Path) -> Result<Vec<EpochLog>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Loss and weighted RMSE of `params` in inference mode, without augmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetScore {
    /// Mean per-frame loss over frames with weighted labels.
    pub loss: f64,
    pub rmse: f64,
}

pub fn score_dataset(params: &ModelParams, samples: &[&Sample], lambda_aux: f64, batch_size: usize) -> Result<DatasetScore> {
    let predictions = ModelPredictor { params, batch_size }.predict_labels(samples)?;
    let mut total = 0.0;
    let mut frames = 0usize;
    for (s, p) in samples.iter().zip(&predictions) {
        let raw: Vec<f64> = s.labels.iter().map(|l| l.weight_raw).collect();
        let Ok(w) = normalize_raw(&raw) else { continue };
        let lookup = |u: usize, v: usize| {
            let i = s.labels.iter().position(|l| (l.u, l.v) == (u, v)).expect("label pixel");
            p[i]
        };
        total += loss(lookup, &s.labels, &w, lambda_aux)?;
        frames += 1;
    }
    if frames == 0 {
        return Err(Error::DegenerateBatch("no frame has weighted labels".into()));
    }
    let rmse = weighted_frame_rmse(&grip_residuals(samples, &predictions)?)?.rmse;
    Ok(DatasetScore {
        loss: total / frames as f64,
        rmse,
    })
}

/// Parameters, optimizer moments and the best validation checkpoint so far.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: Adam<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub best_val_loss: f64,
    pub best_epoch: Option<usize>,
    pub best_params: ModelParams,
}

impl TrainState {
    pub fn new(params: ModelParams, cfg: &TrainConfig) -> Self {
        Self {
            adam: Adam::new(&params, cfg.adam),
            best_params: params.clone(),
            params,
            epoch: 0,
            best_val_loss: f64::INFINITY,
            best_epoch: None,
        }
    }

    /// One pass over `train` in shuffled mini-batches, then validation.
    pub fn run_epoch(&mut self, train: &[&Sample], val: &[&Sample], cfg: &TrainConfig) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let epoch_seed = |stream| derive_seed(derive_seed(cfg.seed, stream), epoch as u64);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(SHUFFLE_STREAM)));
        let mut aug_rng = ChaCha8Rng::seed_from_u64(epoch_seed(AUGMENT_STREAM));
        let modalities = self.params.config.modalities.clone();
        let lr = cfg.epoch_learning_rate(self.epoch);

        let (mut weighted_loss, mut frames) = (0.0, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample> = idx.iter().map(|&i| augment(train[i], &cfg.augment, &mut aug_rng)).collect();
            let refs: Vec<&Sample> = batch.iter().collect();
            let labels: Vec<&[_]> = batch.iter().map(|s| s.labels.as_slice()).collect();
            let mode = Mode::Train {
                dropout_seed: derive_seed(epoch_seed(DROPOUT_STREAM), b as u64),
            };
            let (y, cache) = forward_cached(&self.params, &batch_inputs(&refs, &modalities)?, mode)?;
            let (l, dy, used) = match batch_loss_and_grad(&y, &labels, cfg.lambda_aux) {
                Ok(r) => r,
                Err(Error::DegenerateBatch(_)) => continue,
                Err(e) => return Err(e),
            };
            if !l.is_finite() {
                return Err(Error::Divergence(format!("epoch {epoch} batch {b}: loss {l}")));
            }
            let grads = backward(&self.params, &cache, &dy);
            self.adam.step(&mut self.params, &grads, lr);
            if !self.params.all_finite() {
                return Err(Error::Divergence(format!("epoch {epoch} batch {b}: non-finite parameters")));
            }
            weighted_loss += l * used as f64;
            frames += used;
        }
        if frames == 0 {
            return Err(Error::DegenerateBatch("no training frame has weighted labels".into()));
        }

        let score = score_dataset(&self.params, val, cfg.lambda_aux, cfg.batch_size)?;
        if !score.loss.is_finite() {
            return Err(Error::Divergence(format!("epoch {epoch}: validation loss {}", score.loss)));
        }
        if score.loss < self.best_val_loss {
            self.best_val_loss = score.loss;
            self.best_epoch = Some(epoch);
            self.best_params = self.params.clone();
        }
        self.epoch = epoch;
        Ok(EpochLog {
            epoch,
            train_loss: weighted_loss / frames as f64,
            val_loss: score.loss,
            val_rmse: score.rmse,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub last: ModelParams,
    pub logs: Vec<EpochLog>,
}

/// Train a freshly initialized model, calling `on_epoch` after every epoch.
pub fn train(
    train: &[&Sample],
    val: &[&Sample],
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog, &TrainState) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::DegenerateBatch(format!(
            "{} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let params = init_model(model, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut state = TrainState::new(params, cfg);
    let mut logs = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let log = state.run_epoch(train, val, cfg)?;
        log::info!(
            "epoch {} train {:.5} val {:.5} rmse {:.4} ({:.1}s)",
            log.epoch,
            log.train_loss,
            log.val_loss,
            log.val_rmse,
            log.seconds
        );
        on_epoch(&log, &state)?;
        logs.push(log);
    }
    Ok(TrainOutcome {
        best_epoch: state.best_epoch.expect("at least one epoch"),
        best_val_loss: state.best_val_loss,
        best: state.best_params,
        last: state.params,
        logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_starts_at_the_base_rate_and_halves_midway() {
        let mut cfg = TrainConfig {
            epochs: 10,
            ..TrainConfig::default()
        };
        assert_eq!(cfg.epoch_learning_rate(7), 1e-3);
        cfg.cosine_decay = true;
        assert_eq!(cfg.epoch_learning_rate(0), 1e-3);
        assert!((cfg.epoch_learning_rate(5) - 5e-4).abs() < 1e-15);
        let lrs: Vec<f64> = (0..10).map(|e| cfg.epoch_learning_rate(e)).collect();
        assert!(lrs.windows(2).all(|w| w[1] < w[0]) && lrs[9] > 0.0);
    }
}
