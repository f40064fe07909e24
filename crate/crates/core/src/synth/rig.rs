use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::Result;

/// Sensor mounting on the vehicle body (x forward, y left, z up; angles in degrees).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mount {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    /// Rotation about body +z (left positive).
    #[serde(default)]
    pub yaw_deg: f64,
    /// Downward tilt of the optical axis.
    #[serde(default)]
    pub pitch_deg: f64,
}

impl Mount {
    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// `body_from_camera` in the optical convention.
    pub fn camera_pose(&self) -> Pose {
        Pose::optical_mount(
            self.position(),
            self.yaw_deg.to_radians(),
            self.pitch_deg.to_radians(),
        )
    }

    /// `body_from_sensor` for a body-aligned sensor (LiDAR, road weather sensor).
    pub fn body_pose(&self) -> Pose {
        Pose::from_parts(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw_deg.to_radians()),
            self.position(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub intrinsics: CameraIntrinsics,
    pub mount: Mount,
}

/// Rotating multi-beam LiDAR restricted to a forward azimuth sector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidarModel {
    pub beams: usize,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_half_fov_deg: f64,
    pub azimuth_step_deg: f64,
    /// Duration of one sweep (s); consecutive scans are this far apart.
    pub scan_period: f64,
    pub max_range: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            beams: 16,
            elevation_min_deg: -24.0,
            elevation_max_deg: 2.0,
            azimuth_half_fov_deg: 48.0,
            azimuth_step_deg: 0.6,
            scan_period: 0.1,
            max_range: 80.0,
        }
    }
}

/// Full vehicle sensor rig. The reference RGB camera defines the sample pixel grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorRig {
    pub reference: CameraSpec,
    /// Center camera first, then left and right side cameras.
    pub thermal: Vec<CameraSpec>,
    pub lidar_mount: Mount,
    pub lidar: LidarModel,
    /// Road-weather-sensor footprint center on the road, in the body frame.
    pub rws_mount: Mount,
}

impl SensorRig {
    /// Desk-scale rig: a 96x64 reference camera, three 64x48 thermal cameras
    /// (side cameras yawed 23 degrees outwards), a 16-beam LiDAR and a forward
    /// road weather sensor footprint.
    pub fn desk() -> Result<Self> {
        let reference = CameraSpec {
            intrinsics: CameraIntrinsics::from_hfov(96, 64, 77f64.to_radians())?,
            mount: Mount {
                x: 1.0,
                y: 0.0,
                z: 1.6,
                yaw_deg: 0.0,
                pitch_deg: 8.0,
            },
        };
        let thermal_k = CameraIntrinsics::from_hfov(64, 48, 56f64.to_radians())?;
        let thermal = [0.0, 23.0, -23.0]
            .iter()
            .map(|&yaw| CameraSpec {
                intrinsics: thermal_k,
                mount: Mount {
                    x: 1.1,
                    y: 0.0,
                    z: 1.5,
                    yaw_deg: yaw,
                    pitch_deg: 14.0,
                },
            })
            .collect();
        Ok(Self {
            reference,
            thermal,
            lidar_mount: Mount {
                x: 0.8,
                y: 0.0,
                z: 1.9,
                yaw_deg: 0.0,
                pitch_deg: 0.0,
            },
            lidar: LidarModel::default(),
            rws_mount: Mount {
                x: 3.0,
                y: 0.0,
                z: 0.0,
                yaw_deg: 0.0,
                pitch_deg: 0.0,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.reference.intrinsics.validate()?;
        for t in &self.thermal {
            t.intrinsics.validate()?;
        }
        Ok(())
    }

    pub fn body_from_reference(&self) -> Pose {
        self.reference.mount.camera_pose()
    }

    pub fn body_from_lidar(&self) -> Pose {
        self.lidar_mount.body_pose()
    }

    pub fn body_from_rws(&self) -> Pose {
        self.rws_mount.body_pose()
    }

    /// `reference_from_thermal` for thermal camera `index`.
    pub fn reference_from_thermal(&self, index: usize) -> Pose {
        self.body_from_reference()
            .inverse()
            .compose(&self.thermal[index].mount.camera_pose())
    }
}
