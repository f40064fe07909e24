use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose, RangeImage, Trajectory};
use crate::{Error, Result};

/// One road-weather-sensor sample: grip plus water/ice/snow layer thicknesses (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RwsMeasurement {
    pub timestamp: f64,
    pub grip: f64,
    pub d_water: f64,
    pub d_ice: f64,
    pub d_snow: f64,
}

impl RwsMeasurement {
    pub fn new(timestamp: f64, grip: f64, d_water: f64, d_ice: f64, d_snow: f64) -> Result<Self> {
        let m = Self {
            timestamp,
            grip,
            d_water,
            d_ice,
            d_snow,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.grip) {
            return Err(Error::Domain(format!("grip {} outside [0, 1]", self.grip)));
        }
        if !(self.d_water >= 0.0 && self.d_ice >= 0.0 && self.d_snow >= 0.0) {
            return Err(Error::Domain("layer thicknesses must be non-negative".into()));
        }
        Ok(())
    }
}

/// Filters applied when placing the sensor trace into a camera frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceProjectionConfig {
    /// Measurements farther than this from the camera (m) are dropped.
    pub max_range: f64,
    /// A measurement is occluded when its depth exceeds the range image by more than this (m).
    pub occlusion_tolerance: f64,
    /// Extra tolerance as a fraction of the measurement depth, for coarse pixel grids
    /// where one row spans several meters of road.
    pub occlusion_relative: f64,
    /// Only measurements in `[frame_time, frame_time + window]` (s) are considered.
    pub window: f64,
}

impl Default for TraceProjectionConfig {
    fn default() -> Self {
        Self {
            max_range: 50.0,
            occlusion_tolerance: 0.5,
            occlusion_relative: 0.0,
            window: 10.0,
        }
    }
}

/// A measurement placed at a reference-camera pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedMeasurement {
    pub u: usize,
    pub v: usize,
    pub depth: f64,
    pub grip: f64,
    pub d_water: f64,
    pub d_ice: f64,
    pub d_snow: f64,
}

/// Project the road-weather-sensor trace into the reference camera at `frame_time`.
///
/// Each ground-contact point is placed in the world with the pose at its own timestamp
/// (`world_from_ins(t) * ins_from_rws`), then projected into the camera posed at
/// `frame_time`. Points beyond `max_range`, off-image, or behind a range-image return by
/// more than `occlusion_tolerance` are dropped. Pixels without a return do not occlude.
#[allow(clippy::too_many_arguments)]
pub fn project_rws_trace(
    measurements: &[RwsMeasurement],
    trajectory: &Trajectory,
    ins_from_rws: &Pose,
    ins_from_camera: &Pose,
    k: &CameraIntrinsics,
    range: &RangeImage,
    frame_time: f64,
    config: &TraceProjectionConfig,
) -> Result<Vec<ProjectedMeasurement>> {
    let camera_from_world = trajectory
        .interpolate(frame_time)?
        .compose(ins_from_camera)
        .inverse();
    let mut out = Vec::new();
    for m in measurements {
        if m.timestamp < frame_time || m.timestamp > frame_time + config.window {
            continue;
        }
        let world = trajectory
            .interpolate(m.timestamp)?
            .compose(ins_from_rws)
            .transform_point(&Point3::origin());
        let p_cam = camera_from_world.transform_point(&world);
        if p_cam.coords.norm() > config.max_range {
            continue;
        }
        let Some(proj) = k.project(&p_cam) else { continue };
        let Some((u, v)) = proj.pixel(k.width, k.height) else {
            continue;
        };
        if let Some(surface) = range.at(u, v) {
            if proj.depth > surface + config.occlusion_tolerance + config.occlusion_relative * proj.depth {
                continue;
            }
        }
        out.push(ProjectedMeasurement {
            u,
            v,
            depth: proj.depth,
            grip: m.grip,
            d_water: m.d_water,
            d_ice: m.d_ice,
            d_snow: m.d_snow,
        });
    }
    Ok(out)
}
