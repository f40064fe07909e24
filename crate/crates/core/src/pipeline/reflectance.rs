use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::geometry::{motion_correct_scan, CameraIntrinsics, Pose, TimedPoint, Trajectory};
use crate::Result;

/// Controls which points of the older sweeps contribute to the reflectance image.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AccumulationConfig {
    /// Older sweeps only contribute pixels with row > horizon + `lower_fraction * H`.
    pub lower_fraction: f64,
}

impl Default for AccumulationConfig {
    fn default() -> Self {
        Self { lower_fraction: 0.2 }
    }
}

/// Sensor-side calibration needed to bring sweeps into the reference camera.
#[derive(Clone, Copy, Debug)]
pub struct LidarCalibration<'a> {
    pub body_from_lidar: &'a Pose,
    pub body_from_camera: &'a Pose,
    pub k: &'a CameraIntrinsics,
}

/// Reflectance image on the reference grid and the pixels that received a return.
#[derive(Clone, Debug, PartialEq)]
pub struct ReflectanceImage {
    pub value: Array2<f32>,
    pub valid: Array2<bool>,
}

impl ReflectanceImage {
    pub fn coverage(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }
}

/// Motion-correct the current sweep and the lower part of up to three previous sweeps to
/// `frame_time`, and z-buffer their reflectance into the reference camera grid.
pub fn accumulate_reflectance(
    current: &[TimedPoint],
    previous: &[&[TimedPoint]],
    trajectory: &Trajectory,
    calib: &LidarCalibration,
    frame_time: f64,
    horizon_row: f64,
    cfg: &AccumulationConfig,
) -> Result<ReflectanceImage> {
    let k = calib.k;
    let mut depth = Array2::from_elem((k.height, k.width), f64::INFINITY);
    let mut value = Array2::zeros((k.height, k.width));
    let min_row = horizon_row + cfg.lower_fraction * k.height as f64;
    let sweeps = std::iter::once((current, false)).chain(previous.iter().take(3).map(|s| (*s, true)));
    for (scan, lower_only) in sweeps {
        let pts = motion_correct_scan(scan, trajectory, calib.body_from_lidar, calib.body_from_camera, frame_time)?;
        for (p, src) in pts.iter().zip(scan) {
            let Some(proj) = k.project(p) else { continue };
            let Some((u, v)) = proj.pixel(k.width, k.height) else {
                continue;
            };
            if lower_only && (v as f64) <= min_row {
                continue;
            }
            if proj.depth < depth[[v, u]] {
                depth[[v, u]] = proj.depth;
                value[[v, u]] = src.reflectance;
            }
        }
    }
    Ok(ReflectanceImage {
        value,
        valid: depth.mapv(f64::is_finite),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Point3, Vector3};

    fn setup() -> (Trajectory, Pose, Pose, CameraIntrinsics) {
        let traj = Trajectory::new(vec![Pose::planar(0.0, 0.0, 0.0, -1.0), Pose::planar(0.0, 0.0, 0.0, 1.0)]).unwrap();
        let lidar = Pose::from_parts(Default::default(), Vector3::new(0.0, 0.0, 2.0));
        let cam = Pose::optical_mount(Vector3::new(0.0, 0.0, 1.5), 0.0, 0.2);
        let k = CameraIntrinsics::from_hfov(32, 24, 1.2).unwrap();
        (traj, lidar, cam, k)
    }

    fn ground_scan(t: f64) -> Vec<TimedPoint> {
        (0..40)
            .flat_map(|i| (0..10).map(move |j| (i, j)))
            .map(|(i, j)| TimedPoint {
                position: Point3::new(3.0 + i as f64 * 0.5, -2.5 + j as f64 * 0.5, -2.0),
                timestamp: t,
                reflectance: 0.35,
            })
            .collect()
    }

    #[test]
    fn no_previous_scans_uses_current_only() {
        let (traj, lidar, cam, k) = setup();
        let calib = LidarCalibration {
            body_from_lidar: &lidar,
            body_from_camera: &cam,
            k: &k,
        };
        let scan = ground_scan(0.0);
        let img = accumulate_reflectance(&scan, &[], &traj, &calib, 0.0, 5.0, &Default::default()).unwrap();
        assert!(img.coverage() > 0);
        let twice = accumulate_reflectance(&scan, &[&scan, &scan], &traj, &calib, 0.0, 5.0, &Default::default()).unwrap();
        assert_eq!(img, twice);
    }
}
