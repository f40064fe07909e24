//! Constructed scenes with brute-force answers for the projection filters.

use gripmap::geometry::{
    build_range_image, project_rws_trace, CameraIntrinsics, Pose, RangeImage, RwsMeasurement,
    TraceProjectionConfig, Trajectory, DEFAULT_FILL_RADIUS,
};
use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest pixel error of `project(backproject(u, v, d))` over random intrinsics, pixels and depths.
pub fn round_trip_max_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let (w, h) = (rng.random_range(16..4096), rng.random_range(16..3072));
        let k = CameraIntrinsics::new(
            rng.random_range(20.0..5000.0),
            rng.random_range(20.0..5000.0),
            rng.random_range(0.0..w as f64),
            rng.random_range(0.0..h as f64),
            w,
            h,
        )
        .unwrap();
        let (u, v) = (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
        let d = rng.random_range(0.05..500.0);
        let p = k.project(&k.backproject(u, v, d)).unwrap();
        worst = worst.max((p.u - u).abs()).max((p.v - v).abs());
    }
    worst
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FilterCheck {
    /// Measurements with an unambiguous brute-force answer.
    pub checked: usize,
    pub mismatches: usize,
    /// Checked measurements the brute force expects to be dropped.
    pub dropped: usize,
    /// Measurements within a few pixels of an occluder silhouette, not compared.
    pub ambiguous: usize,
}

/// Axis-aligned world box standing on the ground in front of the vehicle.
pub struct Obstacle {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Obstacle {
    pub fn default_box() -> Self {
        Self {
            min: Point3::new(8.0, -1.5, 0.0),
            max: Point3::new(9.0, 1.5, 2.5),
        }
    }

    /// Smallest ray parameter `s > 0` where `origin + s * dir` enters the box.
    pub fn entry(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let t0 = (self.min[a] - origin[a]) / dir[a];
            let t1 = (self.max[a] - origin[a]) / dir[a];
            lo = lo.max(t0.min(t1));
            hi = hi.min(t0.max(t1));
        }
        (lo <= hi && hi > 0.0).then_some(lo)
    }

    fn surface_points(&self, step: f64) -> Vec<Point3<f64>> {
        let grid = |a: f64, b: f64| {
            let n = ((b - a) / step).round() as usize;
            (0..=n).map(move |i| a + (b - a) * i as f64 / n as f64)
        };
        let (lo, hi) = (self.min, self.max);
        let mut pts = Vec::new();
        for y in grid(lo.y, hi.y) {
            for z in grid(lo.z, hi.z) {
                pts.push(Point3::new(lo.x, y, z));
                pts.push(Point3::new(hi.x, y, z));
            }
            for x in grid(lo.x, hi.x) {
                pts.push(Point3::new(x, y, hi.z));
            }
        }
        for x in grid(lo.x, hi.x) {
            for z in grid(lo.z, hi.z) {
                pts.push(Point3::new(x, lo.y, z));
                pts.push(Point3::new(x, hi.y, z));
            }
        }
        pts
    }

    fn covers_ground(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.min.x - margin && x <= self.max.x + margin && y >= self.min.y - margin && y <= self.max.y + margin
    }
}

/// Vehicle driving along world x at 10 m/s with a forward camera 1.5 m above the ground.
pub struct TraceScene {
    pub trajectory: Trajectory,
    pub ins_from_camera: Pose,
    pub k: CameraIntrinsics,
}

impl TraceScene {
    pub fn new() -> Self {
        let poses = (0..=100).map(|i| Pose::planar(i as f64, 0.0, 0.0, i as f64 * 0.1)).collect();
        Self {
            trajectory: Trajectory::new(poses).unwrap(),
            ins_from_camera: Pose::optical_mount(Vector3::new(0.0, 0.0, 1.5), 0.0, 0.05),
            k: CameraIntrinsics::new(600.0, 600.0, 479.5, 299.5, 960, 600).unwrap(),
        }
    }

    pub fn world_from_camera(&self) -> Pose {
        self.trajectory.interpolate(0.0).unwrap().compose(&self.ins_from_camera)
    }

    /// Range image of the ground (x up to `ground_extent`) and `obstacle`, built from points.
    pub fn range_image(&self, obstacle: &Obstacle, ground_extent: f64) -> RangeImage {
        let cam_from_world = self.world_from_camera().inverse();
        let mut pts = Vec::new();
        let step = 0.02;
        for i in 0..((ground_extent - 0.5) / step) as usize {
            let x = 0.5 + i as f64 * step;
            for j in 0..=800 {
                let y = -8.0 + j as f64 * step;
                if !obstacle.covers_ground(x, y, 0.0) {
                    pts.push(Point3::new(x, y, 0.0));
                }
            }
        }
        pts.extend(obstacle.surface_points(0.01));
        let cam: Vec<_> = pts.iter().map(|p| cam_from_world.transform_point(p)).collect();
        build_range_image(&cam, &self.k, DEFAULT_FILL_RADIUS)
    }

    /// Ground measurements every 0.25 m along the path, at several lateral footprint offsets.
    pub fn footprints(&self, max_x: f64) -> Vec<(Pose, Vec<RwsMeasurement>)> {
        let times: Vec<f64> = (8..).map(|i| i as f64 * 0.025).take_while(|t| t * 10.0 <= max_x).collect();
        (0..=40)
            .map(|j| {
                let rws = Pose::from_parts(nalgebra::UnitQuaternion::identity(), Vector3::new(0.0, -5.0 + 0.25 * j as f64, 0.0));
                let ms = times.iter().map(|&t| RwsMeasurement::new(t, 0.5, 0.0, 0.0, 0.0).unwrap()).collect();
                (rws, ms)
            })
            .collect()
    }

    pub fn project(
        &self,
        rws: &Pose,
        ms: &[RwsMeasurement],
        range: &RangeImage,
        cfg: &TraceProjectionConfig,
    ) -> Vec<f64> {
        project_rws_trace(ms, &self.trajectory, rws, &self.ins_from_camera, &self.k, range, 0.0, cfg)
            .unwrap()
            .iter()
            .map(|p| p.depth)
            .collect()
    }

    fn ground_point(&self, rws: &Pose, t: f64) -> Point3<f64> {
        self.trajectory.interpolate(t).unwrap().compose(rws).transform_point(&Point3::origin())
    }
}

impl Default for TraceScene {
    fn default() -> Self {
        Self::new()
    }
}

fn kept_depths(expected: &[(f64, bool)], actual: &[f64]) -> usize {
    let mut mismatches = 0;
    let mut it = actual.iter().peekable();
    for &(depth, keep) in expected {
        let got = it.peek().is_some_and(|&&d| (d - depth).abs() < 1e-9);
        if got {
            it.next();
        }
        mismatches += usize::from(got != keep);
    }
    mismatches + it.count()
}

/// Range cutoff on an unobstructed scene: kept iff in front, inside the image and within range.
pub fn range_filter_check(max_range: f64) -> FilterCheck {
    let scene = TraceScene::new();
    let cam_from_world = scene.world_from_camera().inverse();
    let cfg = TraceProjectionConfig {
        max_range,
        ..TraceProjectionConfig::default()
    };
    let empty = RangeImage::empty(scene.k.width, scene.k.height);
    let mut check = FilterCheck::default();
    for (rws, ms) in scene.footprints(80.0) {
        let expected: Vec<(f64, bool)> = ms
            .iter()
            .map(|m| {
                let p = cam_from_world.transform_point(&scene.ground_point(&rws, m.timestamp));
                let inside = scene.k.project(&p).and_then(|q| q.pixel(scene.k.width, scene.k.height)).is_some();
                (p.z, inside && p.coords.norm() <= max_range)
            })
            .collect();
        check.checked += expected.len();
        check.dropped += expected.iter().filter(|e| !e.1).count();
        check.mismatches += kept_depths(&expected, &scene.project(&rws, &ms, &empty, &cfg));
    }
    check
}

/// Occlusion behind a box at 8 m, compared with exact segment-box intersection.
///
/// Measurements stop at 20 m, where one pixel row spans less than the 0.5 m tolerance,
/// so the ground never hides itself. Measurements whose 7x7 pixel neighborhood
/// disagrees about the box are counted as ambiguous.
pub fn occlusion_check() -> FilterCheck {
    let scene = TraceScene::new();
    let obstacle = Obstacle::default_box();
    let world_from_camera = scene.world_from_camera();
    let cam_from_world = world_from_camera.inverse();
    let origin = Point3::from(world_from_camera.translation);
    let range = scene.range_image(&obstacle, 25.0);
    let cfg = TraceProjectionConfig::default();
    let k = scene.k;
    let mut check = FilterCheck::default();
    for (rws, ms) in scene.footprints(20.0) {
        let mut expected = Vec::new();
        let mut subset = Vec::new();
        for m in &ms {
            let g = scene.ground_point(&rws, m.timestamp);
            let p = cam_from_world.transform_point(&g);
            let Some((pu, pv)) = k.project(&p).and_then(|q| q.pixel(k.width, k.height)) else {
                continue;
            };
            if obstacle.covers_ground(g.x, g.y, 0.6) {
                continue;
            }
            let hidden_along = |u: f64, v: f64| {
                let dir = world_from_camera.transform_vector(&k.ray(u, v));
                obstacle.entry(&origin, &dir).is_some_and(|s| s < p.z)
            };
            let occluded = obstacle.entry(&origin, &(g - origin)).is_some_and(|s| s < 1.0);
            let ambiguous = (-3..=3i32).any(|du| {
                (-3..=3i32).any(|dv| hidden_along(pu as f64 + du as f64, pv as f64 + dv as f64) != occluded)
            });
            if ambiguous {
                check.ambiguous += 1;
                continue;
            }
            expected.push((p.z, !occluded));
            subset.push(*m);
        }
        check.checked += expected.len();
        check.dropped += expected.iter().filter(|e| !e.1).count();
        check.mismatches += kept_depths(&expected, &scene.project(&rws, &subset, &range, &cfg));
    }
    check
}
