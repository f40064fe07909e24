use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Off-road ground albedo (constant).
pub const BACKGROUND_ALBEDO: [f32; 3] = [0.22, 0.30, 0.17];

/// Named road condition families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Dry,
    Wet,
    SnowyWithTracks,
    IcyPatches,
    Slush,
    Mixed,
}

impl ProfileKind {
    pub const ALL: [ProfileKind; 6] = [
        ProfileKind::Dry,
        ProfileKind::Wet,
        ProfileKind::SnowyWithTracks,
        ProfileKind::IcyPatches,
        ProfileKind::Slush,
        ProfileKind::Mixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileKind::Dry => "dry",
            ProfileKind::Wet => "wet",
            ProfileKind::SnowyWithTracks => "snowy_with_tracks",
            ProfileKind::IcyPatches => "icy_patches",
            ProfileKind::Slush => "slush",
            ProfileKind::Mixed => "mixed",
        }
    }

    /// Typical road surface temperature (°C) for the condition.
    fn base_temperature(self) -> f64 {
        match self {
            ProfileKind::Dry => 6.0,
            ProfileKind::Wet => 3.0,
            ProfileKind::SnowyWithTracks => -5.0,
            ProfileKind::IcyPatches => -2.0,
            ProfileKind::Slush => 0.5,
            ProfileKind::Mixed => -1.0,
        }
    }
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProfileKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown condition profile `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionProfile {
    pub kind: ProfileKind,
    /// Layer severity in `[0, 1]`.
    pub intensity: f64,
    /// Scene brightness in `[0, 1]` (night is low).
    pub illumination: f64,
}

impl ConditionProfile {
    pub fn new(kind: ProfileKind, intensity: f64, illumination: f64) -> Result<Self> {
        let p = Self {
            kind,
            intensity,
            illumination,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn named(name: &str, intensity: f64, illumination: f64) -> Result<Self> {
        Self::new(name.parse()?, intensity, illumination)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) || !(0.0..=1.0).contains(&self.illumination) {
            return Err(Error::Config(
                "profile intensity and illumination must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Axis-aligned box obstacle in world coordinates (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    /// Slab test; returns the entry distance along `dir` if the ray hits.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for axis in 0..3 {
            let o = origin[axis];
            let d = dir[axis];
            if d.abs() < 1e-15 {
                if o < self.min[axis] || o > self.max[axis] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[axis] - o) / d;
            let t1 = (self.max[axis] - o) / d;
            t_near = t_near.max(t0.min(t1));
            t_far = t_far.min(t0.max(t1));
        }
        (t_near <= t_far && t_far > 0.0).then(|| t_near.max(0.0))
    }
}

/// Ground-plane raster: cell `(iy, ix)` covers `[x0 + ix*cell, x0 + (ix+1)*cell)` etc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneGrid {
    pub x0: f64,
    pub y0: f64,
    pub cell_size: f64,
    pub nx: usize,
    pub ny: usize,
}

impl SceneGrid {
    pub fn cell(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let ix = ((x - self.x0) / self.cell_size).floor();
        let iy = ((y - self.y0) / self.cell_size).floor();
        (ix >= 0.0 && iy >= 0.0 && (ix as usize) < self.nx && (iy as usize) < self.ny)
            .then(|| (iy as usize, ix as usize))
    }

    pub fn center(&self, iy: usize, ix: usize) -> (f64, f64) {
        (
            self.x0 + (ix as f64 + 0.5) * self.cell_size,
            self.y0 + (iy as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn x_max(&self) -> f64 {
        self.x0 + self.nx as f64 * self.cell_size
    }

    pub fn y_max(&self) -> f64 {
        self.y0 + self.ny as f64 * self.cell_size
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.cell(x, y).is_some()
    }
}

/// Where a scene sits in the world and how large it is.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneLayout {
    pub x_start: f64,
    pub length: f64,
    /// Half width of the paved road around `y = 0` (m).
    pub road_half_width: f64,
    /// Half width of the rasterized area around `y = 0` (m).
    pub half_extent: f64,
    pub cell_size: f64,
    /// Roadside box obstacles to scatter.
    pub obstacles: usize,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            x_start: -20.0,
            length: 200.0,
            road_half_width: 3.5,
            half_extent: 12.0,
            cell_size: 0.1,
            obstacles: 2,
        }
    }
}

/// Layer thicknesses (mm) at a ground location.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Layers {
    pub water: f64,
    pub ice: f64,
    pub snow: f64,
}

/// Synthetic ground scene: road mask, layer fields, albedo and temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub profile: ConditionProfile,
    pub grid: SceneGrid,
    pub road_mask: Array2<bool>,
    pub d_water: Array2<f32>,
    pub d_ice: Array2<f32>,
    pub d_snow: Array2<f32>,
    /// `[iy, ix, channel]`, RGB in `[0, 1]`.
    pub albedo: Array3<f32>,
    /// °C.
    pub temperature: Array2<f32>,
    pub obstacles: Vec<Aabb>,
    pub seed: u64,
    /// Lateral center of the two snow-free tire tracks (`snowy_with_tracks` only).
    pub track_center: Option<f64>,
}

impl SceneSpec {
    pub fn is_road(&self, x: f64, y: f64) -> bool {
        self.grid
            .cell(x, y)
            .is_some_and(|(iy, ix)| self.road_mask[[iy, ix]])
    }

    /// Layer thicknesses at the cell containing `(x, y)`; zero outside the grid.
    pub fn layers_at(&self, x: f64, y: f64) -> Layers {
        self.grid
            .cell(x, y)
            .map(|(iy, ix)| Layers {
                water: self.d_water[[iy, ix]] as f64,
                ice: self.d_ice[[iy, ix]] as f64,
                snow: self.d_snow[[iy, ix]] as f64,
            })
            .unwrap_or_default()
    }

    pub fn temperature_at(&self, x: f64, y: f64) -> Option<f64> {
        self.grid
            .cell(x, y)
            .map(|(iy, ix)| self.temperature[[iy, ix]] as f64)
    }

    pub fn albedo_at(&self, x: f64, y: f64) -> Option<[f32; 3]> {
        self.grid.cell(x, y).map(|(iy, ix)| {
            [
                self.albedo[[iy, ix, 0]],
                self.albedo[[iy, ix, 1]],
                self.albedo[[iy, ix, 2]],
            ]
        })
    }

    fn empty(profile: ConditionProfile, grid: SceneGrid, seed: u64) -> Self {
        let shape = (grid.ny, grid.nx);
        Self {
            profile,
            grid,
            road_mask: Array2::from_elem(shape, false),
            d_water: Array2::zeros(shape),
            d_ice: Array2::zeros(shape),
            d_snow: Array2::zeros(shape),
            albedo: Array3::zeros((grid.ny, grid.nx, 3)),
            temperature: Array2::zeros(shape),
            obstacles: Vec::new(),
            seed,
            track_center: None,
        }
    }
}

/// Deterministic seed derivation (splitmix64 finalizer over `seed ^ stream`).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Smooth value noise in `[0, 1]`: random lattice values, smoothstep-interpolated.
struct ValueNoise {
    lattice: Array2<f32>,
    x0: f64,
    y0: f64,
    spacing: f64,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, grid: &SceneGrid, spacing: f64) -> Self {
        let nx = ((grid.x_max() - grid.x0) / spacing).ceil() as usize + 2;
        let ny = ((grid.y_max() - grid.y0) / spacing).ceil() as usize + 2;
        let lattice = Array2::from_shape_fn((ny, nx), |_| rng.random::<f32>());
        Self {
            lattice,
            x0: grid.x0,
            y0: grid.y0,
            spacing,
        }
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = ((x - self.x0) / self.spacing).max(0.0);
        let fy = ((y - self.y0) / self.spacing).max(0.0);
        let (ny, nx) = self.lattice.dim();
        let ix = (fx.floor() as usize).min(nx - 2);
        let iy = (fy.floor() as usize).min(ny - 2);
        let smooth = |t: f64| {
            let t = t.clamp(0.0, 1.0);
            t * t * (3.0 - 2.0 * t)
        };
        let tx = smooth(fx - ix as f64);
        let ty = smooth(fy - iy as f64);
        let l = |r: usize, c: usize| self.lattice[[r, c]] as f64;
        let top = l(iy, ix) * (1.0 - tx) + l(iy, ix + 1) * tx;
        let bottom = l(iy + 1, ix) * (1.0 - tx) + l(iy + 1, ix + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Compact blob with a smooth dome profile.
struct Blob {
    x: f64,
    y: f64,
    radius: f64,
    peak: f64,
}

impl Blob {
    fn value(&self, x: f64, y: f64) -> f64 {
        let r2 = ((x - self.x).powi(2) + (y - self.y).powi(2)) / (self.radius * self.radius);
        if r2 >= 1.0 {
            0.0
        } else {
            self.peak * (1.0 - r2 * r2).min(1.0)
        }
    }
}

fn scatter_blobs(
    rng: &mut ChaCha8Rng,
    layout: &SceneLayout,
    per_100m2: f64,
    radius: (f64, f64),
    peak: (f64, f64),
) -> Vec<Blob> {
    let area = layout.length * 2.0 * layout.road_half_width;
    let count = (area / 100.0 * per_100m2).round() as usize;
    (0..count)
        .map(|_| Blob {
            x: rng.random_range(layout.x_start..layout.x_start + layout.length),
            y: rng.random_range(-layout.road_half_width..layout.road_half_width),
            radius: rng.random_range(radius.0..radius.1),
            peak: rng.random_range(peak.0..peak.1),
        })
        .collect()
}

/// Snow-free tire track geometry around a lateral center.
pub const TRACK_OFFSET: f64 = 0.85;
pub const TRACK_HALF_WIDTH: f64 = 0.3;

/// Track membership in `[0, 1]` with a 0.1 m soft edge.
pub fn track_weight(y: f64, center: f64) -> f64 {
    let d = ((y - center).abs() - TRACK_OFFSET).abs();
    ((TRACK_HALF_WIDTH + 0.05 - d) / 0.1).clamp(0.0, 1.0)
}

/// Generate a scene with the default layout.
pub fn generate_scene(profile: ConditionProfile, seed: u64) -> Result<SceneSpec> {
    generate_scene_with(profile, seed, &SceneLayout::default())
}

/// Generate a scene; deterministic in `(profile, seed, layout)`.
pub fn generate_scene_with(
    profile: ConditionProfile,
    seed: u64,
    layout: &SceneLayout,
) -> Result<SceneSpec> {
    profile.validate()?;
    if !(layout.length > 0.0 && layout.cell_size > 0.0 && layout.half_extent > layout.road_half_width) {
        return Err(Error::Config("invalid scene layout".into()));
    }
    let grid = SceneGrid {
        x0: layout.x_start,
        y0: -layout.half_extent,
        cell_size: layout.cell_size,
        nx: (layout.length / layout.cell_size).round() as usize,
        ny: (2.0 * layout.half_extent / layout.cell_size).round() as usize,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5CE7E));
    let mut scene = SceneSpec::empty(profile, grid, seed);
    let k = profile.intensity;

    let texture = ValueNoise::new(&mut rng, &grid, 1.5);
    let temp_noise = ValueNoise::new(&mut rng, &grid, 8.0);
    let field_a = ValueNoise::new(&mut rng, &grid, 6.0);
    let field_b = ValueNoise::new(&mut rng, &grid, 3.0);
    let base_temp = profile.kind.base_temperature() + rng.random_range(-2.0..2.0);

    let track_center = (profile.kind == ProfileKind::SnowyWithTracks)
        .then(|| rng.random_range(-0.8..0.8));
    scene.track_center = track_center;
    let ice_blobs = match profile.kind {
        ProfileKind::IcyPatches => scatter_blobs(&mut rng, layout, 0.8 + 1.2 * k, (1.5, 3.5), (0.4, 1.2)),
        ProfileKind::Mixed => scatter_blobs(&mut rng, layout, 2.0 + 2.0 * k, (0.5, 1.5), (0.3, 1.0)),
        _ => Vec::new(),
    };

    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let (x, y) = grid.center(iy, ix);
            let road = y.abs() <= layout.road_half_width;
            scene.road_mask[[iy, ix]] = road;
            let tex = texture.sample(x, y) - 0.5;
            if road {
                let gray = (0.38 + 0.08 * tex) as f32;
                scene.albedo[[iy, ix, 0]] = gray;
                scene.albedo[[iy, ix, 1]] = gray;
                scene.albedo[[iy, ix, 2]] = gray * 1.02;
            } else {
                for c in 0..3 {
                    scene.albedo[[iy, ix, c]] = BACKGROUND_ALBEDO[c];
                }
            }
            let offroad_cooling = if road { 0.0 } else { -1.5 };
            scene.temperature[[iy, ix]] =
                (base_temp + offroad_cooling + 0.6 * (temp_noise.sample(x, y) - 0.5)) as f32;
            if !road {
                continue;
            }
            let a = field_a.sample(x, y);
            let b = field_b.sample(x, y);
            let ice: f64 = ice_blobs.iter().map(|blob| blob.value(x, y)).fold(0.0, f64::max);
            let (water, snow) = match profile.kind {
                ProfileKind::Dry => (0.0, 0.0),
                ProfileKind::Wet => (k * (0.6 + 4.4 * a), 0.0),
                ProfileKind::SnowyWithTracks => {
                    let cover = (2.0 + 3.0 * a) * (0.6 + 0.4 * k);
                    let tracked = 0.2 * b;
                    let t = track_weight(y, track_center.unwrap_or(0.0));
                    (0.0, cover * (1.0 - t) + tracked * t)
                }
                ProfileKind::IcyPatches => (0.0, 0.0),
                ProfileKind::Slush => (k * (1.0 + 3.0 * a), k * (0.5 + 2.0 * b)),
                ProfileKind::Mixed => {
                    let snow = if b > 0.62 { (b - 0.62) / 0.38 * 6.0 * (0.5 + 0.5 * k) } else { 0.0 };
                    (k * 2.5 * a, snow)
                }
            };
            scene.d_water[[iy, ix]] = water as f32;
            scene.d_snow[[iy, ix]] = snow as f32;
            scene.d_ice[[iy, ix]] = ice as f32;
        }
    }

    for _ in 0..layout.obstacles {
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = rng.random_range(layout.x_start..layout.x_start + layout.length);
        let y = side * rng.random_range(layout.road_half_width + 1.0..layout.half_extent - 3.0);
        let (sx, sy, sz) = (
            rng.random_range(1.0..4.0),
            rng.random_range(0.8..2.0),
            rng.random_range(1.0..2.5),
        );
        scene.obstacles.push(Aabb {
            min: [x, y - sy / 2.0, 0.0],
            max: [x + sx, y + sy / 2.0, sz],
        });
    }
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{grip_oracle, GripModelParams};

    fn small_layout() -> SceneLayout {
        SceneLayout {
            x_start: 0.0,
            length: 40.0,
            ..SceneLayout::default()
        }
    }

    #[test]
    fn dry_scene_has_no_layers() {
        for seed in [0, 7, 123] {
            let p = ConditionProfile::new(ProfileKind::Dry, 1.0, 1.0).unwrap();
            let s = generate_scene_with(p, seed, &small_layout()).unwrap();
            assert!(s.d_water.iter().chain(&s.d_ice).chain(&s.d_snow).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in ProfileKind::ALL {
            let p = ConditionProfile::new(kind, 0.7, 0.8).unwrap();
            let a = generate_scene_with(p, 42, &small_layout()).unwrap();
            let b = generate_scene_with(p, 42, &small_layout()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_profile_is_a_config_error() {
        assert!(matches!("blizzard".parse::<ProfileKind>(), Err(Error::Config(_))));
        assert_eq!("icy_patches".parse::<ProfileKind>().unwrap(), ProfileKind::IcyPatches);
    }

    #[test]
    fn tracks_are_grippier_than_adjacent_snow() {
        let gp = GripModelParams::default();
        for seed in 0..6u64 {
            for intensity in [0.0, 0.5, 1.0] {
                let p = ConditionProfile::new(ProfileKind::SnowyWithTracks, intensity, 1.0).unwrap();
                let s = generate_scene_with(p, seed, &small_layout()).unwrap();
                let c = s.track_center.unwrap();
                for i in 0..40 {
                    let x = 0.5 + i as f64;
                    let grip = |y: f64| {
                        let l = s.layers_at(x, y);
                        grip_oracle(l.water, l.ice, l.snow, &gp).unwrap()
                    };
                    for side in [-1.0, 1.0] {
                        let track = grip(c + side * TRACK_OFFSET);
                        let adjacent = grip(c + side * (TRACK_OFFSET + TRACK_HALF_WIDTH + 0.35));
                        assert!(track >= adjacent + 0.2, "seed {seed} x {x}: {track} vs {adjacent}");
                    }
                }
            }
        }
    }

    #[test]
    fn icy_patches_are_compact() {
        let p = ConditionProfile::new(ProfileKind::IcyPatches, 1.0, 1.0).unwrap();
        let s = generate_scene_with(p, 3, &small_layout()).unwrap();
        let road_cells = s.road_mask.iter().filter(|&&r| r).count();
        let icy = s.d_ice.iter().filter(|&&d| d > 0.0).count();
        assert!(icy > 0);
        assert!(icy < road_cells / 2, "ice should cover patches, not the road");
        assert!(s.d_water.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aabb_slab_test() {
        let b = Aabb {
            min: [5.0, -1.0, 0.0],
            max: [6.0, 1.0, 2.0],
        };
        let o = Point3::new(0.0, 0.0, 1.0);
        assert_eq!(b.intersect(&o, &Vector3::new(1.0, 0.0, 0.0)), Some(5.0));
        assert_eq!(b.intersect(&o, &Vector3::new(-1.0, 0.0, 0.0)), None);
        assert_eq!(b.intersect(&o, &Vector3::new(1.0, 0.0, 1.0)), None);
    }

    #[test]
    fn derive_seed_spreads_streams() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
