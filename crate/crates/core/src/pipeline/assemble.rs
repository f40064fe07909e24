use nalgebra::Vector3;
use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use crate::geometry::{
    build_range_image, estimate_horizon_row, motion_correct_scan, project_rws_trace, thermal_lookup, RangeImage,
    TraceProjectionConfig, DEFAULT_FILL_RADIUS,
};
use crate::pipeline::reflectance::{accumulate_reflectance, AccumulationConfig, LidarCalibration};
use crate::pipeline::thermal::{harmonize_side_cameras, normalize_thermal_frame, overlap_strip, SideView};
use crate::pipeline::weights::raw_weight;
use crate::pipeline::{Sample, SparseLabel};
use crate::synth::{DriveRecording, FrameBundle, SensorRig};
use crate::{Error, Result};

/// Settings for turning raw recordings into matched samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyConfig {
    pub trace: TraceProjectionConfig,
    pub accumulation: AccumulationConfig,
    pub fill_radius: usize,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        Self {
            // A desk-rig row spans d^2 / (fy h) of road: about 7 m at 25 m range.
            trace: TraceProjectionConfig {
                occlusion_relative: 0.15,
                max_range: 25.0,
                ..TraceProjectionConfig::default()
            },
            accumulation: AccumulationConfig::default(),
            fill_radius: DEFAULT_FILL_RADIUS,
        }
    }
}

/// Thermal cameras resampled onto the reference grid through the range image; NaN where
/// a camera has no view of the pixel.
pub fn thermal_on_reference(frame: &FrameBundle, rig: &SensorRig, range: &RangeImage) -> Vec<Array2<f32>> {
    let k_ref = &rig.reference.intrinsics;
    rig.thermal
        .iter()
        .zip(&frame.thermal)
        .enumerate()
        .map(|(i, (cam, raw))| {
            let ref_from_thermal = rig.reference_from_thermal(i);
            Array2::from_shape_fn((k_ref.height, k_ref.width), |(v, u)| {
                thermal_lookup((u, v), range, k_ref, &ref_from_thermal, &cam.intrinsics, raw.image.view())
                    .unwrap_or(f32::NAN)
            })
        })
        .collect()
}

/// Match one recorded frame onto the reference camera grid.
pub fn assemble_frame(
    recording: &DriveRecording,
    index: usize,
    rig: &SensorRig,
    cfg: &AssemblyConfig,
    id: String,
) -> Result<Sample> {
    let frame = &recording.frames[index];
    let traj = &recording.trajectory;
    let k = &rig.reference.intrinsics;
    let body_from_cam = rig.body_from_reference();
    let body_from_lidar = rig.body_from_lidar();
    let body = traj.interpolate(frame.time)?;
    let world_from_cam = body.compose(&body_from_cam);
    let horizon = estimate_horizon_row(&world_from_cam, k, &Vector3::z())?;

    let mut cloud = Vec::new();
    for scan in &frame.scans {
        cloud.extend(motion_correct_scan(scan, traj, &body_from_lidar, &body_from_cam, frame.time)?);
    }
    let range = build_range_image(&cloud, k, cfg.fill_radius);

    let views = thermal_on_reference(frame, rig, &range);
    let center = views
        .first()
        .ok_or_else(|| Error::Config("rig has no thermal camera".into()))?;
    let strips: Vec<Array2<bool>> = views.iter().map(|s| overlap_strip(center.view(), s.view())).collect();
    let side = |i: usize| {
        views.get(i).and_then(|img| {
            strips[i].iter().any(|&b| b).then(|| SideView {
                image: img.view(),
                strip: strips[i].view(),
            })
        })
    };
    let combined = harmonize_side_cameras(center.view(), side(1), side(2))?.image;
    let region = Zip::from(&combined)
        .and(&frame.road_mask)
        .map_collect(|t, &r| r && t.is_finite());
    let thermal = normalize_thermal_frame(combined.view(), region.view())?.mapv(|t| if t.is_finite() { t } else { 0.0 });

    let previous: Vec<&[_]> = frame.scans.iter().skip(1).map(|s| s.as_slice()).collect();
    let calib = LidarCalibration {
        body_from_lidar: &body_from_lidar,
        body_from_camera: &body_from_cam,
        k,
    };
    let refl = accumulate_reflectance(&frame.scans[0], &previous, traj, &calib, frame.time, horizon, &cfg.accumulation)?;

    let labels = project_rws_trace(
        &recording.rws_trace,
        traj,
        &rig.body_from_rws(),
        &body_from_cam,
        k,
        &range,
        frame.time,
        &cfg.trace,
    )?
    .into_iter()
    .map(|m| SparseLabel {
        u: m.u,
        v: m.v,
        grip: m.grip,
        d_water: m.d_water,
        d_ice: m.d_ice,
        d_snow: m.d_snow,
        weight_raw: raw_weight(m.v as f64, horizon, k.height),
    })
    .collect();

    let p = body.translation;
    Ok(Sample {
        id,
        frame_time: frame.time,
        position: [p.x, p.y],
        rgb: frame.rgb.clone(),
        thermal,
        reflectance: refl.value,
        reflectance_valid: refl.valid,
        road_mask: frame.road_mask.clone(),
        labels,
    })
}

/// Match every frame of a recording; sample ids are `{prefix}_{frame:04}`.
pub fn assemble_samples(recording: &DriveRecording, rig: &SensorRig, cfg: &AssemblyConfig, prefix: &str) -> Result<Vec<Sample>> {
    (0..recording.frames.len())
        .map(|i| assemble_frame(recording, i, rig, cfg, format!("{prefix}_{i:04}")))
        .collect()
}
