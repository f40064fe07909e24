use std::f64::consts::TAU;

use nalgebra::Point3;
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, RwsMeasurement, TimedPoint, Trajectory};
use crate::synth::render::{render_reflectance, render_rgb, render_road_mask, render_thermal, RawThermal, RenderConfig};
use crate::synth::{derive_seed, grip_oracle, GripModelParams, SceneSpec, SensorRig};
use crate::{Error, Result};

/// A weaving constant-speed drive along the road (+x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub start_x: f64,
    /// m/s
    pub speed: f64,
    pub lateral_center: f64,
    pub weave_amplitude: f64,
    /// s
    pub weave_period: f64,
    pub weave_phase: f64,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            start_x: 0.0,
            speed: 8.0,
            lateral_center: 0.0,
            weave_amplitude: 0.8,
            weave_period: 7.0,
            weave_phase: 0.0,
        }
    }
}

/// Sample the path as a trajectory with knots at `rate_hz` over `[t_start, t_end]`.
pub fn plan_path(cfg: &PathConfig, t_start: f64, t_end: f64, rate_hz: f64) -> Result<Trajectory> {
    if !(cfg.speed > 0.0 && cfg.weave_period > 0.0 && rate_hz > 0.0 && t_end > t_start) {
        return Err(Error::Config("invalid path configuration".into()));
    }
    let n = ((t_end - t_start) * rate_hz).ceil() as usize;
    let poses = (0..=n)
        .map(|i| {
            let t = (t_start + i as f64 / rate_hz).min(t_end);
            let w = TAU / cfg.weave_period;
            let y = cfg.lateral_center + cfg.weave_amplitude * (w * t + cfg.weave_phase).sin();
            let dy = cfg.weave_amplitude * w * (w * t + cfg.weave_phase).cos();
            Pose::planar(cfg.start_x + cfg.speed * t, y, dy.atan2(cfg.speed), t)
        })
        .collect::<Vec<_>>();
    let mut poses = poses;
    poses.dedup_by(|a, b| a.timestamp == b.timestamp);
    Trajectory::new(poses)
}

/// Recording rates and label noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// s
    pub duration: f64,
    pub frame_rate: f64,
    pub rws_rate: f64,
    /// Standard deviation of the additive grip noise on the sensor trace.
    pub label_noise_sd: f64,
    /// Number of LiDAR sweeps kept before the one ending at each frame time.
    pub previous_scans: usize,
    pub grip: GripModelParams,
    pub render: RenderConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            duration: 10.0,
            frame_rate: 2.0,
            rws_rate: 40.0,
            label_noise_sd: 0.02,
            previous_scans: 3,
            grip: GripModelParams::default(),
            render: RenderConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn frame_times(&self) -> Vec<f64> {
        let n = (self.duration * self.frame_rate).round() as usize;
        (0..n).map(|k| k as f64 / self.frame_rate).collect()
    }

    pub fn rws_times(&self) -> Vec<f64> {
        let n = (self.duration * self.rws_rate).round() as usize;
        (0..n).map(|k| k as f64 / self.rws_rate).collect()
    }
}

/// Raw sensor data at one reference-camera capture.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameBundle {
    pub time: f64,
    pub rgb: Array3<f32>,
    pub road_mask: Array2<bool>,
    /// One raw image per rig thermal camera.
    pub thermal: Vec<RawThermal>,
    /// LiDAR sweeps in the sensor frame; index 0 ends at `time`, index `i` ends
    /// `i` scan periods earlier.
    pub scans: Vec<Vec<TimedPoint>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveRecording {
    pub frames: Vec<FrameBundle>,
    pub rws_trace: Vec<RwsMeasurement>,
    pub trajectory: Trajectory,
}

/// Simulate the rig driving `path` over `scene`; deterministic in `seed`.
pub fn simulate_drive(
    scene: &SceneSpec,
    path: &Trajectory,
    rig: &SensorRig,
    sim: &SimConfig,
    seed: u64,
) -> Result<DriveRecording> {
    let lidar_lookback = (sim.previous_scans + 1) as f64 * rig.lidar.scan_period;
    if path.start_time() > -lidar_lookback + 1e-9 || path.end_time() < sim.duration {
        return Err(Error::Range(format!(
            "path spans [{}, {}] but the drive needs [{}, {}]",
            path.start_time(),
            path.end_time(),
            -lidar_lookback,
            sim.duration
        )));
    }
    let footprint = rig.body_from_rws();
    for pose in path.poses() {
        let body = pose.translation;
        let fp = pose.compose(&footprint).transform_point(&Point3::origin());
        if !scene.grid.contains(body.x, body.y) || !scene.is_road(fp.x, fp.y) {
            return Err(Error::Range(format!(
                "path leaves the scene road at t={} (x={:.1}, y={:.1})",
                pose.timestamp, fp.x, fp.y
            )));
        }
    }

    let mut label_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xAB));
    let noise = Normal::new(0.0, sim.label_noise_sd.max(0.0)).expect("finite sd");
    let rws_trace = sim
        .rws_times()
        .into_iter()
        .map(|t| {
            let p = path.interpolate(t)?.compose(&footprint).transform_point(&Point3::origin());
            let l = scene.layers_at(p.x, p.y);
            let mut grip = grip_oracle(l.water, l.ice, l.snow, &sim.grip)?;
            if sim.label_noise_sd > 0.0 {
                grip = (grip + noise.sample(&mut label_rng)).clamp(0.0, 1.0);
            }
            RwsMeasurement::new(t, grip, l.water, l.ice, l.snow)
        })
        .collect::<Result<Vec<_>>>()?;

    let body_from_cam = rig.body_from_reference();
    let body_from_lidar = rig.body_from_lidar();
    let frames = sim
        .frame_times()
        .into_iter()
        .enumerate()
        .map(|(i, t)| {
            let frame_seed = derive_seed(seed, i as u64 + 1);
            let body = path.interpolate(t)?;
            let world_from_cam = body.compose(&body_from_cam);
            let thermal = rig
                .thermal
                .iter()
                .enumerate()
                .map(|(c, cam)| {
                    let pose = body.compose(&cam.mount.camera_pose());
                    render_thermal(scene, &pose, &cam.intrinsics, &sim.render, derive_seed(frame_seed, 100 + c as u64))
                })
                .collect();
            let scans = (0..=sim.previous_scans)
                .map(|s| {
                    render_reflectance(
                        scene,
                        path,
                        &body_from_lidar,
                        t - s as f64 * rig.lidar.scan_period,
                        &rig.lidar,
                        &sim.render,
                        derive_seed(frame_seed, 200 + s as u64),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameBundle {
                time: t,
                rgb: render_rgb(scene, &world_from_cam, &rig.reference.intrinsics, &sim.render, frame_seed),
                road_mask: render_road_mask(scene, &world_from_cam, &rig.reference.intrinsics),
                thermal,
                scans,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(DriveRecording {
        frames,
        rws_trace,
        trajectory: path.clone(),
    })
}
