//! Rigid poses, trajectory interpolation, pinhole projection, range images,
//! LiDAR motion correction and projection of the road-weather-sensor trace.
//!
//! Frame conventions: world and body frames are z-up (body x forward, y left);
//! camera frames are optical (x right, y down, z along the viewing direction).

mod camera;
mod pose;
mod range;
mod rws;

pub use camera::{estimate_horizon_row, project_points, CameraIntrinsics, Projection};
pub use pose::{Pose, Trajectory};
pub use range::{
    build_range_image, motion_correct_scan, thermal_lookup, RangeImage, TimedPoint,
    DEFAULT_FILL_RADIUS, NO_RETURN,
};
pub use rws::{project_rws_trace, ProjectedMeasurement, RwsMeasurement, TraceProjectionConfig};
