use crate::{Error, Result};

/// How label weights are normalized within a frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightMode<'a> {
    /// Mean one over the given labels.
    Eval,
    /// Normalized like `Eval`, but over `prefilter_rows` when given (the label rows before
    /// occlusion and range filtering).
    Train { prefilter_rows: Option<&'a [f64]> },
}

/// Linear ramp: 0 at the horizon row, 1 at the bottom row `H - 1`.
pub fn raw_weight(v: f64, horizon_row: f64, height: usize) -> f64 {
    ((v - horizon_row) / ((height - 1) as f64 - horizon_row)).max(0.0)
}

fn check_geometry(horizon_row: f64, height: usize) -> Result<()> {
    if !(horizon_row >= 0.0 && horizon_row < (height as f64 - 1.0)) {
        return Err(Error::Domain(format!(
            "horizon row {horizon_row} must lie in [0, {})",
            height as f64 - 1.0
        )));
    }
    Ok(())
}

fn mean_one_scale(rows: &[f64], horizon_row: f64, height: usize) -> Result<f64> {
    let total: f64 = rows.iter().map(|&v| raw_weight(v, horizon_row, height)).sum();
    if rows.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateWeights(format!(
            "{} labels with zero total weight",
            rows.len()
        )));
    }
    Ok(rows.len() as f64 / total)
}

/// Per-label weights for label rows `rows`, normalized to mean one within the frame.
pub fn compute_weights(rows: &[f64], horizon_row: f64, height: usize, mode: WeightMode) -> Result<Vec<f64>> {
    check_geometry(horizon_row, height)?;
    let norm_rows = match mode {
        WeightMode::Train {
            prefilter_rows: Some(pre),
        } => pre,
        _ => rows,
    };
    let scale = mean_one_scale(norm_rows, horizon_row, height)?;
    Ok(rows.iter().map(|&v| raw_weight(v, horizon_row, height) * scale).collect())
}

/// Mean-one normalization of already computed raw weights.
pub fn normalize_raw(raw: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = raw.iter().sum();
    if raw.is_empty() || total <= 0.0 {
        return Err(Error::DegenerateWeights(format!(
            "{} labels with zero total weight",
            raw.len()
        )));
    }
    let scale = raw.len() as f64 / total;
    Ok(raw.iter().map(|w| w * scale).collect())
}
