use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::{Error, Result};

/// Ideal pinhole intrinsics. Pixel centers sit at integer `(u, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

/// A projected point: column `u`, row `v`, and depth along the optical axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Projection {
    /// Nearest pixel `(col, row)` if it falls inside a `width x height` image.
    pub fn pixel(&self, width: usize, height: usize) -> Option<(usize, usize)> {
        let u = crate::raster::nearest_index(self.u, width)?;
        let v = crate::raster::nearest_index(self.v, height)?;
        Some((u, v))
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with the principal point at the image center and the given horizontal FOV.
    pub fn from_hfov(width: usize, height: usize, hfov_rad: f64) -> Result<Self> {
        let f = (width as f64 / 2.0) / (hfov_rad / 2.0).tan();
        Self::new(
            f,
            f,
            (width as f64 - 1.0) / 2.0,
            (height as f64 - 1.0) / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::Config(format!("cx={} outside image width", self.cx)));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::Config(format!("cy={} outside image height", self.cy)));
        }
        Ok(())
    }

    /// Pinhole projection; `None` for points on or behind the image plane.
    pub fn project(&self, p: &Point3<f64>) -> Option<Projection> {
        if !(p.z > 0.0) {
            return None;
        }
        Some(Projection {
            u: self.fx * p.x / p.z + self.cx,
            v: self.fy * p.y / p.z + self.cy,
            depth: p.z,
        })
    }

    /// Camera-frame point at pixel `(u, v)` with optical-axis depth `depth`.
    pub fn backproject(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        Point3::new(
            (u - self.cx) / self.fx * depth,
            (v - self.cy) / self.fy * depth,
            depth,
        )
    }

    /// Unnormalized viewing ray through pixel `(u, v)` (z component is 1).
    pub fn ray(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }
}

/// Project camera-frame points; points with `z <= 0` map to `None`.
pub fn project_points(points: &[Point3<f64>], k: &CameraIntrinsics) -> Vec<Option<Projection>> {
    points.iter().map(|p| k.project(p)).collect()
}

/// Image row of the ground plane's vanishing line at the image center column.
///
/// `world_from_camera` uses the optical convention (x right, y down, z forward);
/// `ground_normal` is expressed in the world frame.
pub fn estimate_horizon_row(
    world_from_camera: &Pose,
    k: &CameraIntrinsics,
    ground_normal: &Vector3<f64>,
) -> Result<f64> {
    let norm = ground_normal.norm();
    if !(norm > 0.0) {
        return Err(Error::Geometry("ground normal has zero length".into()));
    }
    let n = world_from_camera.rotation.inverse() * (ground_normal / norm);
    // Vanishing line: n . K^-1 (u, v, 1) = 0, solved for v at the center column.
    let u = (k.width as f64 - 1.0) / 2.0;
    let x = (u - k.cx) / k.fx;
    if n.y.abs() < 1e-9 {
        return Err(Error::Geometry(
            "ground plane is edge-on to the image rows; no horizon row".into(),
        ));
    }
    let y = -(n.x * x + n.z) / n.y;
    let row = k.cy + k.fy * y;
    if !row.is_finite() {
        return Err(Error::Geometry("horizon row is not finite".into()));
    }
    Ok(row)
}
