use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Isometry3, Point3, Quaternion, Rotation3, Translation3, UnitQuaternion, Vector3};

use crate::{Error, Result};

/// Time-stamped rigid transform (`world_from_body` for trajectory knots,
/// `parent_from_child` for static extrinsics where the timestamp is unused).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: f64,
}

impl Pose {
    pub fn new(
        rotation: UnitQuaternion<f64>,
        translation: Vector3<f64>,
        timestamp: f64,
    ) -> Result<Self> {
        if !timestamp.is_finite() {
            return Err(Error::Domain(format!("non-finite timestamp {timestamp}")));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain("non-finite translation".into()));
        }
        let norm = rotation.quaternion().norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("quaternion norm {norm} is not 1")));
        }
        Ok(Self {
            rotation,
            translation,
            timestamp,
        })
    }

    pub fn identity() -> Self {
        Self::from_parts(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Static transform with a zero timestamp.
    pub fn from_parts(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
            timestamp: 0.0,
        }
    }

    pub fn with_timestamp(mut self, timestamp: f64) -> Self {
        self.timestamp = timestamp;
        self
    }

    /// Body pose on the ground plane: translation `(x, y, 0)` and heading `yaw` (rad, about +z).
    pub fn planar(x: f64, y: f64, yaw: f64, timestamp: f64) -> Self {
        Self {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            translation: Vector3::new(x, y, 0.0),
            timestamp,
        }
    }

    /// `body_from_camera` for a camera mounted at `position` (body frame: x forward,
    /// y left, z up) whose optical axis is yawed left by `yaw` and pitched down by
    /// `pitch_down` (radians). The camera frame is x right, y down, z along the optical axis.
    pub fn optical_mount(position: Vector3<f64>, yaw: f64, pitch_down: f64) -> Self {
        let (sp, cp) = pitch_down.sin_cos();
        // Columns: camera axes expressed in a forward-looking body frame.
        let x_cam = Vector3::new(0.0, -1.0, 0.0);
        let y_cam = Vector3::new(-sp, 0.0, -cp);
        let z_cam = Vector3::new(cp, 0.0, -sp);
        let level = Rotation3::from_matrix_unchecked(nalgebra::Matrix3::from_columns(&[
            x_cam, y_cam, z_cam,
        ]));
        let yawed = Rotation3::from_axis_angle(&Vector3::z_axis(), yaw) * level;
        Self::from_parts(UnitQuaternion::from_rotation_matrix(&yawed), position)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn inverse(&self) -> Pose {
        let rotation = self.rotation.inverse();
        Pose {
            rotation,
            translation: -(rotation * self.translation),
            timestamp: self.timestamp,
        }
    }

    /// `self * other`; keeps `self`'s timestamp.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            timestamp: self.timestamp,
        }
    }
}

/// Time-ordered sequence of `world_from_body` poses.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.len() < 2 {
            return Err(Error::Range(format!(
                "trajectory needs at least 2 poses, got {}",
                poses.len()
            )));
        }
        for pair in poses.windows(2) {
            if !(pair[1].timestamp > pair[0].timestamp) {
                return Err(Error::Domain(format!(
                    "trajectory timestamps not strictly increasing at t={}",
                    pair[1].timestamp
                )));
            }
        }
        Ok(Self { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn start_time(&self) -> f64 {
        self.poses[0].timestamp
    }

    pub fn end_time(&self) -> f64 {
        self.poses[self.poses.len() - 1].timestamp
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.start_time() && t <= self.end_time()
    }

    /// Pose at time `t`: linear in translation, spherical-linear in rotation.
    pub fn interpolate(&self, t: f64) -> Result<Pose> {
        if !self.covers(t) {
            return Err(Error::Range(format!(
                "t={t} outside trajectory span [{}, {}]",
                self.start_time(),
                self.end_time()
            )));
        }
        let idx = self.poses.partition_point(|p| p.timestamp <= t);
        let prev = &self.poses[idx - 1];
        if prev.timestamp == t || idx == self.poses.len() {
            return Ok(*prev);
        }
        let next = &self.poses[idx];
        let alpha = (t - prev.timestamp) / (next.timestamp - prev.timestamp);
        Ok(Pose {
            rotation: prev.rotation.slerp(&next.rotation, alpha),
            translation: prev.translation.lerp(&next.translation, alpha),
            timestamp: t,
        })
    }

    /// Parse the text format: one pose per line, `t qx qy qz qw tx ty tz`.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut poses = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Domain(format!("line {}: {e}", lineno + 1)))?;
            let [t, qx, qy, qz, qw, tx, ty, tz] = values[..] else {
                return Err(Error::Domain(format!(
                    "line {}: expected 8 fields, got {}",
                    lineno + 1,
                    values.len()
                )));
            };
            let q = Quaternion::new(qw, qx, qy, qz);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "line {}: quaternion norm {} is not 1",
                    lineno + 1,
                    q.norm()
                )));
            }
            poses.push(Pose::new(
                UnitQuaternion::from_quaternion(q),
                Vector3::new(tx, ty, tz),
                t,
            )?);
        }
        Self::new(poses)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for p in &self.poses {
            let q = p.rotation.quaternion();
            let t = p.translation;
            writeln!(
                out,
                "{} {} {} {} {} {} {} {}",
                p.timestamp, q.i, q.j, q.k, q.w, t.x, t.y, t.z
            )
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
