use nalgebra::{Point3, Vector3};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose, TimedPoint, Trajectory};
use crate::synth::rig::LidarModel;
use crate::synth::scene::{SceneSpec, BACKGROUND_ALBEDO};
use crate::synth::{derive_seed, grip_oracle, GripModelParams};
use crate::Result;

pub const SKY_COLOR: [f32; 3] = [0.55, 0.65, 0.80];
pub const OBSTACLE_COLOR: [f32; 3] = [0.45, 0.18, 0.16];
const SNOW_COLOR: [f32; 3] = [0.93, 0.94, 0.96];
const ICE_COLOR: [f32; 3] = [0.52, 0.62, 0.74];
/// Ground farther than this is treated as sky.
const HORIZON_DISTANCE: f64 = 400.0;

/// LiDAR reflectance of each surface material at 903 nm (range-normalized).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialReflectance {
    pub asphalt: f64,
    pub water: f64,
    pub ice: f64,
    pub snow: f64,
    pub off_road: f64,
    pub obstacle: f64,
}

impl Default for MaterialReflectance {
    fn default() -> Self {
        Self {
            asphalt: 0.35,
            water: 0.10,
            ice: 0.22,
            snow: 0.75,
            off_road: 0.45,
            obstacle: 0.60,
        }
    }
}

/// Appearance model shared by the RGB, thermal and LiDAR renderers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Thickness (mm) at which a layer's visual effect saturates.
    pub visual_tau_water: f64,
    pub visual_tau_ice: f64,
    pub visual_tau_snow: f64,
    /// Strength of the bluish ice tint in RGB (0 makes ice invisible to the camera).
    pub ice_rgb_tint: f64,
    pub rgb_noise_sd: f64,
    /// Cooling (°C) of a saturated layer relative to bare road.
    pub snow_thermal_contrast: f64,
    pub water_thermal_contrast: f64,
    pub ice_thermal_contrast: f64,
    pub sky_temperature: f64,
    pub obstacle_temperature: f64,
    pub far_ground_temperature: f64,
    /// Thermal sensor noise, in °C before the per-frame affine scale.
    pub thermal_noise_sd: f64,
    pub thermal_gain_range: [f64; 2],
    pub thermal_offset_range: [f64; 2],
    pub reflectance: MaterialReflectance,
    pub reflectance_noise_sd: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            visual_tau_water: 6.0,
            visual_tau_ice: 0.5,
            visual_tau_snow: 2.0,
            ice_rgb_tint: 0.6,
            rgb_noise_sd: 0.01,
            snow_thermal_contrast: 2.5,
            water_thermal_contrast: 0.8,
            ice_thermal_contrast: 1.0,
            sky_temperature: -30.0,
            obstacle_temperature: 2.0,
            far_ground_temperature: -3.0,
            thermal_noise_sd: 0.05,
            thermal_gain_range: [0.5, 2.0],
            thermal_offset_range: [-20.0, 20.0],
            reflectance: MaterialReflectance::default(),
            reflectance_noise_sd: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surface {
    /// Paved road at world `(x, y)`.
    Road { x: f64, y: f64 },
    /// Ground off the road; `cell` is false beyond the scene raster.
    OffRoad { x: f64, y: f64, cell: bool },
    Obstacle,
    Sky,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub surface: Surface,
    pub distance: f64,
    pub point: Point3<f64>,
}

/// Cast a ray against the ground plane `z = 0` and the scene obstacles.
pub fn raycast(scene: &SceneSpec, origin: &Point3<f64>, dir: &Vector3<f64>) -> Hit {
    let dir = dir.normalize();
    let mut best = f64::INFINITY;
    let mut surface = Surface::Sky;
    if dir.z < -1e-12 {
        let t = -origin.z / dir.z;
        if t > 0.0 && t < HORIZON_DISTANCE {
            best = t;
            let p = origin + dir * t;
            surface = if scene.is_road(p.x, p.y) {
                Surface::Road { x: p.x, y: p.y }
            } else {
                Surface::OffRoad {
                    x: p.x,
                    y: p.y,
                    cell: scene.grid.contains(p.x, p.y),
                }
            };
        }
    }
    for b in &scene.obstacles {
        if let Some(t) = b.intersect(origin, &dir) {
            if t < best {
                best = t;
                surface = Surface::Obstacle;
            }
        }
    }
    Hit {
        surface,
        distance: best,
        point: origin + dir * best.min(1e9),
    }
}

fn sat(d: f64, tau: f64) -> f64 {
    (d / tau).clamp(0.0, 1.0)
}

fn lerp3(a: [f32; 3], b: [f32; 3], t: f64) -> [f32; 3] {
    let t = t as f32;
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

/// Road color before illumination: albedo, then water darkening, ice tint, snow whitening.
pub fn road_color(scene: &SceneSpec, x: f64, y: f64, cfg: &RenderConfig) -> [f32; 3] {
    let l = scene.layers_at(x, y);
    let mut c = scene.albedo_at(x, y).unwrap_or(BACKGROUND_ALBEDO);
    let w = sat(l.water, cfg.visual_tau_water);
    let darken = (1.0 - 0.5 * w) as f32;
    let sheen = (0.06 * w) as f32;
    c = c.map(|v| v * darken + sheen);
    c = lerp3(c, ICE_COLOR, cfg.ice_rgb_tint * sat(l.ice, cfg.visual_tau_ice));
    lerp3(c, SNOW_COLOR, sat(l.snow, cfg.visual_tau_snow))
}

fn surface_color(scene: &SceneSpec, hit: &Hit, cfg: &RenderConfig) -> [f32; 3] {
    match hit.surface {
        Surface::Road { x, y } => road_color(scene, x, y, cfg),
        Surface::OffRoad { .. } => BACKGROUND_ALBEDO,
        Surface::Obstacle => OBSTACLE_COLOR,
        Surface::Sky => SKY_COLOR,
    }
}

/// Cast one ray per pixel center of camera `k` posed at `world_from_camera`.
pub fn cast_pixels(scene: &SceneSpec, world_from_camera: &Pose, k: &CameraIntrinsics) -> Array2<Hit> {
    let origin = Point3::from(world_from_camera.translation);
    Array2::from_shape_fn((k.height, k.width), |(v, u)| {
        let dir = world_from_camera.transform_vector(&k.ray(u as f64, v as f64));
        raycast(scene, &origin, &dir)
    })
}

/// RGB image in `[0, 1]`, `H x W x 3`.
pub fn render_rgb(
    scene: &SceneSpec,
    world_from_camera: &Pose,
    k: &CameraIntrinsics,
    cfg: &RenderConfig,
    seed: u64,
) -> Array3<f32> {
    let hits = cast_pixels(scene, world_from_camera, k);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x26B));
    let noise = Normal::new(0.0, cfg.rgb_noise_sd.max(0.0)).expect("finite sd");
    let illum = scene.profile.illumination as f32;
    let mut img = Array3::zeros((k.height, k.width, 3));
    for ((v, u), hit) in hits.indexed_iter() {
        let c = surface_color(scene, hit, cfg);
        for ch in 0..3 {
            let n = if cfg.rgb_noise_sd > 0.0 { noise.sample(&mut rng) as f32 } else { 0.0 };
            img[[v, u, ch]] = (c[ch] * illum + n).clamp(0.0, 1.0);
        }
    }
    img
}

/// Pixels whose ray first hits the paved road.
pub fn render_road_mask(scene: &SceneSpec, world_from_camera: &Pose, k: &CameraIntrinsics) -> Array2<bool> {
    cast_pixels(scene, world_from_camera, k).map(|h| matches!(h.surface, Surface::Road { .. }))
}

/// Noise-free oracle grip at every road pixel; NaN elsewhere.
pub fn render_grip_truth(
    scene: &SceneSpec,
    world_from_camera: &Pose,
    k: &CameraIntrinsics,
    params: &GripModelParams,
) -> Result<Array2<f32>> {
    let hits = cast_pixels(scene, world_from_camera, k);
    let mut out = Array2::from_elem((k.height, k.width), f32::NAN);
    for ((v, u), hit) in hits.indexed_iter() {
        if let Surface::Road { x, y } = hit.surface {
            let l = scene.layers_at(x, y);
            out[[v, u]] = grip_oracle(l.water, l.ice, l.snow, params)? as f32;
        }
    }
    Ok(out)
}

/// Raw thermal frame: `gain * (temperature + noise) + offset` with a per-frame affine.
#[derive(Clone, Debug, PartialEq)]
pub struct RawThermal {
    pub image: Array2<f32>,
    pub gain: f64,
    pub offset: f64,
}

/// Apparent surface temperature (°C) including layer cooling.
pub fn surface_temperature(scene: &SceneSpec, hit: &Hit, cfg: &RenderConfig) -> f64 {
    match hit.surface {
        Surface::Road { x, y } => {
            let l = scene.layers_at(x, y);
            scene.temperature_at(x, y).unwrap_or(cfg.far_ground_temperature)
                - cfg.snow_thermal_contrast * sat(l.snow, cfg.visual_tau_snow)
                - cfg.water_thermal_contrast * sat(l.water, cfg.visual_tau_water)
                - cfg.ice_thermal_contrast * sat(l.ice, cfg.visual_tau_ice)
        }
        Surface::OffRoad { x, y, .. } => scene
            .temperature_at(x, y)
            .unwrap_or(cfg.far_ground_temperature),
        Surface::Obstacle => cfg.obstacle_temperature,
        Surface::Sky => cfg.sky_temperature,
    }
}

pub fn render_thermal(
    scene: &SceneSpec,
    world_from_camera: &Pose,
    k: &CameraIntrinsics,
    cfg: &RenderConfig,
    seed: u64,
) -> RawThermal {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7E4));
    let gain = rng.random_range(cfg.thermal_gain_range[0]..=cfg.thermal_gain_range[1]);
    let offset = rng.random_range(cfg.thermal_offset_range[0]..=cfg.thermal_offset_range[1]);
    let noise = Normal::new(0.0, cfg.thermal_noise_sd.max(0.0)).expect("finite sd");
    let hits = cast_pixels(scene, world_from_camera, k);
    let image = hits.map(|hit| {
        let n = if cfg.thermal_noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
        (gain * (surface_temperature(scene, hit, cfg) + n) + offset) as f32
    });
    RawThermal {
        image,
        gain,
        offset,
    }
}

/// Reflectance of a ground or obstacle hit, before noise.
pub fn surface_reflectance(scene: &SceneSpec, hit: &Hit, cfg: &RenderConfig) -> f64 {
    let m = &cfg.reflectance;
    match hit.surface {
        Surface::Road { x, y } => {
            let l = scene.layers_at(x, y);
            let mut r = m.asphalt;
            r += (m.water - r) * sat(l.water, cfg.visual_tau_water);
            r += (m.ice - r) * sat(l.ice, cfg.visual_tau_ice);
            r += (m.snow - r) * sat(l.snow, cfg.visual_tau_snow);
            r
        }
        Surface::OffRoad { .. } => m.off_road,
        Surface::Obstacle => m.obstacle,
        Surface::Sky => 0.0,
    }
}

/// One LiDAR sweep ending at `scan_end`, as sensor-frame points with per-point timestamps.
///
/// The sensor moves along `trajectory` during the sweep; azimuth advances linearly in time.
pub fn render_reflectance(
    scene: &SceneSpec,
    trajectory: &Trajectory,
    body_from_lidar: &Pose,
    scan_end: f64,
    lidar: &LidarModel,
    cfg: &RenderConfig,
    seed: u64,
) -> Result<Vec<TimedPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x11DA));
    let noise = Normal::new(0.0, cfg.reflectance_noise_sd.max(0.0)).expect("finite sd");
    let n_az = ((2.0 * lidar.azimuth_half_fov_deg) / lidar.azimuth_step_deg).floor() as usize + 1;
    let scan_start = scan_end - lidar.scan_period;
    let mut points = Vec::with_capacity(n_az * lidar.beams);
    for j in 0..n_az {
        // Sweep right-to-left; the last column is captured at `scan_end`.
        let az = (-lidar.azimuth_half_fov_deg + j as f64 * lidar.azimuth_step_deg).to_radians();
        let t = scan_start + lidar.scan_period * (j + 1) as f64 / n_az as f64;
        let world_from_sensor = trajectory.interpolate(t)?.compose(body_from_lidar);
        let origin = Point3::from(world_from_sensor.translation);
        for b in 0..lidar.beams {
            let frac = if lidar.beams > 1 { b as f64 / (lidar.beams - 1) as f64 } else { 0.0 };
            let el = (lidar.elevation_min_deg
                + frac * (lidar.elevation_max_deg - lidar.elevation_min_deg))
                .to_radians();
            let dir_s = Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            let hit = raycast(scene, &origin, &world_from_sensor.transform_vector(&dir_s));
            if matches!(hit.surface, Surface::Sky) || hit.distance > lidar.max_range {
                continue;
            }
            let n = if cfg.reflectance_noise_sd > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            points.push(TimedPoint {
                position: Point3::from(dir_s * hit.distance),
                timestamp: t,
                reflectance: (surface_reflectance(scene, &hit, cfg) + n).clamp(0.0, 1.0) as f32,
            });
        }
    }
    Ok(points)
}
