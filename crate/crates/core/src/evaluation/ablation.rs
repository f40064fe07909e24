use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluation::predict::{evaluate, EvalReport, ModelPredictor};
use crate::evaluation::metrics::grip_stats;
use crate::model::{modalities_label, Modality, ModelConfig};
use crate::pipeline::Sample;
use crate::training::{train, TrainConfig, TrainOutcome};
use crate::{Error, Result};

/// Modality subsets to train and evaluate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationPlan {
    pub subsets: Vec<Vec<Modality>>,
}

impl Default for AblationPlan {
    /// All seven non-empty subsets, singles first.
    fn default() -> Self {
        let mut subsets: Vec<Vec<Modality>> = (1u8..8)
            .map(|mask| {
                Modality::ALL
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, m)| m)
                    .collect()
            })
            .collect();
        subsets.sort_by_key(|s| s.len());
        Self { subsets }
    }
}

impl AblationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.subsets.is_empty() {
            return Err(Error::Config("ablation plan has no subsets".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for s in &self.subsets {
            let mut canon = s.clone();
            canon.sort();
            canon.dedup();
            if canon.is_empty() || canon.len() != s.len() {
                return Err(Error::Config(format!("invalid modality subset {s:?}")));
            }
            if !seen.insert(canon) {
                return Err(Error::Config(format!("duplicate modality subset {s:?}")));
            }
        }
        Ok(())
    }
}

/// A named evaluation split.
pub struct EvalSet<'a> {
    pub name: String,
    pub samples: Vec<&'a Sample>,
}

/// One table cell; `error` is set when training or evaluation of the subset failed.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub report: EvalReport,
    pub error: Option<String>,
}

/// Train one model per subset with the shared `train_cfg` and evaluate it on every set.
/// `on_trained` receives each trained model; its errors abort the run.
pub fn run_ablation(
    plan: &AblationPlan,
    train_set: &[&Sample],
    val_set: &[&Sample],
    eval_sets: &[EvalSet],
    template: &ModelConfig,
    train_cfg: &TrainConfig,
    mut on_trained: impl FnMut(&[Modality], &TrainOutcome) -> Result<()>,
) -> Result<Vec<AblationRow>> {
    plan.validate()?;
    let mut rows = Vec::new();
    for subset in &plan.subsets {
        let cfg = template.clone().with_modalities(subset);
        let label = modalities_label(&cfg.modalities);
        let outcome = train(train_set, val_set, &cfg, train_cfg, |_, _| Ok(()));
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                log::error!("training {label} failed: {e}");
                for set in eval_sets {
                    rows.push(failed_row(&label, set, e.to_string()));
                }
                continue;
            }
        };
        on_trained(&cfg.modalities, &outcome)?;
        let predictor = ModelPredictor {
            params: &outcome.best,
            batch_size: train_cfg.batch_size,
        };
        for set in eval_sets {
            rows.push(match evaluate(&predictor, &set.samples, &set.name) {
                Ok(report) => AblationRow { report, error: None },
                Err(e) => failed_row(&label, set, e.to_string()),
            });
        }
    }
    Ok(rows)
}

fn failed_row(label: &str, set: &EvalSet, error: String) -> AblationRow {
    let stats = grip_stats(set.samples.iter().flat_map(|s| s.labels.iter().map(|l| l.grip))).ok();
    AblationRow {
        report: EvalReport {
            modalities: label.to_string(),
            set: set.name.clone(),
            grip_mean: stats.map_or(f64::NAN, |s| s.mean),
            grip_sd: stats.map_or(f64::NAN, |s| s.sd),
            n_samples: set.samples.len(),
            rmse: f64::NAN,
            frame_mse: Vec::new(),
            skipped: 0,
        },
        error: Some(error),
    }
}

/// Table with columns `modalities,set,grip_mean,grip_sd,n_samples,rmse`; failed rows
/// carry a NaN RMSE.
pub fn write_ablation_table(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(&r.report)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_ablation_table(path: &Path) -> Result<Vec<EvalReport>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
