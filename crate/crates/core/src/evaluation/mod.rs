//! Weighted per-frame RMSE, modality ablations, scatter export and grip overlays.

mod ablation;
mod metrics;
mod overlay;
mod predict;
mod scatter;

pub use ablation::{read_ablation_table, run_ablation, write_ablation_table, AblationPlan, AblationRow, EvalSet};
pub use metrics::{grip_stats, weighted_frame_rmse, FrameResiduals, GripStats, RmseReport};
pub use predict::{
    evaluate, grip_residuals, predict_maps, ConstantPredictor, EvalReport, LabelPredictions, LabelPredictor, ModelPredictor,
    OraclePredictor,
};
pub use overlay::{grip_color, render_overlay, track_band_means, write_png, OverlayConfig, TrackBands};
pub use scatter::{scatter_sample, write_scatter, ScatterRow};
