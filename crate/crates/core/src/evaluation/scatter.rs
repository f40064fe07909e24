use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::predict::LabelPredictions;
use crate::pipeline::Sample;
use crate::{Error, Result};

/// Truth and prediction of one label, for grip and each layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub grip_true: f64,
    pub grip_pred: f64,
    pub water_true: f64,
    pub water_pred: f64,
    pub ice_true: f64,
    pub ice_pred: f64,
    pub snow_true: f64,
    pub snow_pred: f64,
}

/// Draw `n` labels uniformly over all samples, without replacement unless
/// `with_replacement` is set. Deterministic in `seed`.
pub fn scatter_sample(
    samples: &[&Sample],
    predictions: &LabelPredictions,
    n: usize,
    with_replacement: bool,
    seed: u64,
) -> Result<Vec<ScatterRow>> {
    if samples.len() != predictions.len() {
        return Err(Error::Input(format!("{} samples, {} prediction sets", samples.len(), predictions.len())));
    }
    let pairs: Vec<_> = samples
        .iter()
        .zip(predictions)
        .flat_map(|(s, p)| s.labels.iter().zip(p))
        .collect();
    if pairs.is_empty() {
        return Err(Error::DegenerateBatch("no labels to sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<usize> = if with_replacement {
        (0..n).map(|_| rng.random_range(0..pairs.len())).collect()
    } else {
        if n > pairs.len() {
            return Err(Error::Input(format!(
                "cannot draw {n} of {} labels without replacement",
                pairs.len()
            )));
        }
        let mut idx = index::sample(&mut rng, pairs.len(), n).into_vec();
        idx.sort_unstable();
        idx
    };
    Ok(picks
        .into_iter()
        .map(|i| {
            let (l, p) = pairs[i];
            ScatterRow {
                grip_true: l.grip,
                grip_pred: p[0],
                water_true: l.d_water,
                water_pred: p[1],
                ice_true: l.d_ice,
                ice_pred: p[2],
                snow_true: l.d_snow,
                snow_pred: p[3],
            }
        })
        .collect())
}

pub fn write_scatter(path: &Path, rows: &[ScatterRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
