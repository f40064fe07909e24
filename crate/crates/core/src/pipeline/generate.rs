use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, Trajectory};
use crate::pipeline::assemble::{assemble_samples, AssemblyConfig};
use crate::pipeline::Sample;
use crate::synth::{
    derive_seed, generate_scene_with, plan_path, simulate_drive, ConditionProfile, PathConfig, ProfileKind, SceneLayout,
    SceneSpec, SensorRig, SimConfig,
};
use crate::{Error, Result};

/// Trajectory knot rate used for simulated drives.
const PATH_RATE_HZ: f64 = 100.0;

/// One simulated drive: its scene, path and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub id: String,
    pub profile: ConditionProfile,
    pub scene_seed: u64,
    pub drive_seed: u64,
    pub path: PathConfig,
    /// Offset added to sample positions, placing the drive on a shared map.
    pub origin: [f64; 2],
}

/// Everything shared by the drives of one dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub layout: SceneLayout,
    pub sim: SimConfig,
    pub assembly: AssemblyConfig,
}

/// Ranges from which `plan_drives` draws per-drive parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DrivePlanConfig {
    pub intensity: [f64; 2],
    pub illumination: [f64; 2],
    pub start_x: [f64; 2],
    pub speed: [f64; 2],
    pub lateral_center: [f64; 2],
    pub weave_amplitude: [f64; 2],
    pub weave_period: [f64; 2],
    /// Distance between consecutive drive origins along the map's y axis (m).
    pub origin_spacing: f64,
}

impl Default for DrivePlanConfig {
    fn default() -> Self {
        Self {
            intensity: [0.5, 1.0],
            illumination: [0.7, 1.0],
            start_x: [0.0, 20.0],
            speed: [6.0, 10.0],
            lateral_center: [-0.6, 0.6],
            weave_amplitude: [0.3, 1.0],
            weave_period: [5.0, 10.0],
            origin_spacing: 1000.0,
        }
    }
}

fn draw<R: Rng>(rng: &mut R, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// `drives_per_profile` drives for each profile, with parameters drawn from `cfg`.
/// Drive `i` is named `{prefix}{i:03}_{profile}` and placed at origin `(0, i * spacing)`.
pub fn plan_drives(
    profiles: &[ProfileKind],
    drives_per_profile: usize,
    cfg: &DrivePlanConfig,
    seed: u64,
    prefix: &str,
) -> Result<Vec<DriveSpec>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD41));
    let mut drives = Vec::with_capacity(profiles.len() * drives_per_profile);
    for _ in 0..drives_per_profile {
        for &kind in profiles {
            let i = drives.len();
            let profile = ConditionProfile::new(kind, draw(&mut rng, cfg.intensity), draw(&mut rng, cfg.illumination))?;
            let path = PathConfig {
                start_x: draw(&mut rng, cfg.start_x),
                speed: draw(&mut rng, cfg.speed),
                lateral_center: draw(&mut rng, cfg.lateral_center),
                weave_amplitude: draw(&mut rng, cfg.weave_amplitude),
                weave_period: draw(&mut rng, cfg.weave_period),
                weave_phase: rng.random_range(0.0..TAU),
            };
            drives.push(DriveSpec {
                id: format!("{prefix}{i:03}_{}", kind.name()),
                profile,
                scene_seed: derive_seed(seed, (1 << 32) | (i as u64)),
                drive_seed: derive_seed(seed, (2 << 32) | (i as u64)),
                path,
                origin: [0.0, i as f64 * cfg.origin_spacing],
            });
        }
    }
    Ok(drives)
}

impl DriveSpec {
    pub fn scene(&self, cfg: &GenerationConfig) -> Result<SceneSpec> {
        generate_scene_with(self.profile, self.scene_seed, &cfg.layout)
    }

    /// Vehicle trajectory covering the LiDAR look-back before the first frame.
    pub fn trajectory(&self, rig: &SensorRig, sim: &SimConfig) -> Result<Trajectory> {
        let lookback = (sim.previous_scans + 1) as f64 * rig.lidar.scan_period;
        plan_path(&self.path, -lookback - 0.5, sim.duration + 0.5, PATH_RATE_HZ)
    }

    /// Scene-frame pose of the reference camera at `time`.
    pub fn reference_pose(&self, rig: &SensorRig, sim: &SimConfig, time: f64) -> Result<Pose> {
        Ok(self.trajectory(rig, sim)?.interpolate(time)?.compose(&rig.body_from_reference()))
    }
}

/// Simulate and assemble one drive. Sample ids are `{drive id}_{frame:04}`.
pub fn generate_drive(spec: &DriveSpec, rig: &SensorRig, cfg: &GenerationConfig) -> Result<Vec<Sample>> {
    let scene = spec.scene(cfg)?;
    let path = spec.trajectory(rig, &cfg.sim)?;
    let recording = simulate_drive(&scene, &path, rig, &cfg.sim, spec.drive_seed)
        .map_err(|e| Error::Input(format!("drive {}: {e}", spec.id)))?;
    let mut samples = assemble_samples(&recording, rig, &cfg.assembly, &spec.id)?;
    for s in &mut samples {
        s.position[0] += spec.origin[0];
        s.position[1] += spec.origin[1];
    }
    Ok(samples)
}

/// Samples of every drive, in drive order.
pub fn generate_dataset(drives: &[DriveSpec], rig: &SensorRig, cfg: &GenerationConfig) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for d in drives {
        out.extend(generate_drive(d, rig, cfg)?);
    }
    Ok(out)
}
