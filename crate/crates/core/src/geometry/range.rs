use nalgebra::Point3;
use ndarray::{Array2, ArrayView2};

use crate::geometry::{CameraIntrinsics, Pose, Trajectory};
use crate::raster;
use crate::Result;

/// Depth sentinel for pixels without a LiDAR return.
pub const NO_RETURN: f64 = 0.0;

/// Default hole-filling radius (pixels) for [`build_range_image`].
pub const DEFAULT_FILL_RADIUS: usize = 2;

/// Per-pixel optical-axis depth in meters; non-positive values mean "no return".
#[derive(Clone, Debug, PartialEq)]
pub struct RangeImage {
    pub depth: Array2<f64>,
}

impl RangeImage {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            depth: Array2::from_elem((height, width), NO_RETURN),
        }
    }

    pub fn width(&self) -> usize {
        self.depth.ncols()
    }

    pub fn height(&self) -> usize {
        self.depth.nrows()
    }

    /// Depth at pixel `(u, v)` if there is a return there.
    pub fn at(&self, u: usize, v: usize) -> Option<f64> {
        let d = *self.depth.get((v, u))?;
        (d > 0.0).then_some(d)
    }

    pub fn coverage(&self) -> usize {
        self.depth.iter().filter(|&&d| d > 0.0).count()
    }
}

/// A LiDAR return in the sensor frame with its own capture time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimedPoint {
    pub position: Point3<f64>,
    pub timestamp: f64,
    pub reflectance: f32,
}

/// Express every point of a rolling scan in the camera frame at `reference_time`.
///
/// Each point goes through the trajectory pose at its own capture time, then into the
/// camera at the reference time: `cam_ref^-1 * world_from_body(t_i) * body_from_sensor * p`.
pub fn motion_correct_scan(
    scan: &[TimedPoint],
    trajectory: &Trajectory,
    body_from_sensor: &Pose,
    body_from_camera: &Pose,
    reference_time: f64,
) -> Result<Vec<Point3<f64>>> {
    if scan.is_empty() {
        return Ok(Vec::new());
    }
    let camera_from_world = trajectory
        .interpolate(reference_time)?
        .compose(body_from_camera)
        .inverse();
    scan.iter()
        .map(|pt| {
            let world_from_sensor = trajectory.interpolate(pt.timestamp)?.compose(body_from_sensor);
            Ok(camera_from_world.transform_point(&world_from_sensor.transform_point(&pt.position)))
        })
        .collect()
}

/// Z-buffered depth image of camera-frame points with nearest-neighbor hole filling.
///
/// Empty pixels take the depth of the closest (Euclidean pixel distance) original return
/// within `fill_radius`; ties prefer the nearer depth.
pub fn build_range_image(
    points: &[Point3<f64>],
    k: &CameraIntrinsics,
    fill_radius: usize,
) -> RangeImage {
    let mut img = RangeImage::empty(k.width, k.height);
    for p in points {
        let Some(proj) = k.project(p) else { continue };
        let Some((u, v)) = proj.pixel(k.width, k.height) else {
            continue;
        };
        let cell = &mut img.depth[[v, u]];
        if *cell <= 0.0 || proj.depth < *cell {
            *cell = proj.depth;
        }
    }
    fill_holes(&img.depth.view(), fill_radius).map_or(img, |depth| RangeImage { depth })
}

fn fill_holes(depth: &ArrayView2<f64>, radius: usize) -> Option<Array2<f64>> {
    if radius == 0 {
        return None;
    }
    let (h, w) = depth.dim();
    let r = radius as isize;
    let mut offsets: Vec<(isize, isize, isize)> = Vec::new();
    for dv in -r..=r {
        for du in -r..=r {
            let d2 = du * du + dv * dv;
            if d2 > 0 && d2 <= r * r {
                offsets.push((d2, du, dv));
            }
        }
    }
    offsets.sort_unstable();
    let mut out = depth.to_owned();
    for v in 0..h {
        for u in 0..w {
            if depth[[v, u]] > 0.0 {
                continue;
            }
            let mut best: Option<(isize, f64)> = None;
            for &(d2, du, dv) in &offsets {
                if let Some((bd2, _)) = best {
                    if d2 > bd2 {
                        break;
                    }
                }
                let (uu, vv) = (u as isize + du, v as isize + dv);
                if uu < 0 || vv < 0 || uu >= w as isize || vv >= h as isize {
                    continue;
                }
                let d = depth[[vv as usize, uu as usize]];
                if d > 0.0 && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((d2, d));
                }
            }
            if let Some((_, d)) = best {
                out[[v, u]] = d;
            }
        }
    }
    Some(out)
}

/// Look up the thermal value seen at reference pixel `(u, v)`.
///
/// The pixel is back-projected through its range-image depth, moved into the thermal
/// camera with `ref_from_thermal`, projected, and bilinearly sampled.
pub fn thermal_lookup(
    pixel: (usize, usize),
    range: &RangeImage,
    k_ref: &CameraIntrinsics,
    ref_from_thermal: &Pose,
    k_thermal: &CameraIntrinsics,
    thermal: ArrayView2<f32>,
) -> Option<f32> {
    let (u, v) = pixel;
    let depth = range.at(u, v)?;
    let p_ref = k_ref.backproject(u as f64, v as f64, depth);
    let p_th = ref_from_thermal.inverse().transform_point(&p_ref);
    let proj = k_thermal.project(&p_th)?;
    raster::bilinear(thermal, proj.u, proj.v)
}
