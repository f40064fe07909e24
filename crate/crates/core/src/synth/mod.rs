//! Synthetic road scenes and a simulated sensor rig.
//!
//! Scenes are ground-plane rasters of water/ice/snow layer thicknesses, albedo and
//! temperature. The grip oracle maps layer thicknesses to grip; the renderers produce
//! the RGB, thermal and LiDAR observations and the road weather sensor trace.

mod drive;
mod grip;
pub mod render;
mod rig;
mod scene;

pub use drive::{plan_path, simulate_drive, DriveRecording, FrameBundle, PathConfig, SimConfig};
pub use grip::{grip_oracle, GripModelParams};
pub use render::{
    render_grip_truth, render_reflectance, render_rgb, render_road_mask, render_thermal,
    MaterialReflectance, RawThermal, RenderConfig,
};
pub use rig::{CameraSpec, LidarModel, Mount, SensorRig};
pub use scene::{
    derive_seed, generate_scene, generate_scene_with, track_weight, Aabb, ConditionProfile,
    Layers, ProfileKind, SceneGrid, SceneLayout, SceneSpec, TRACK_HALF_WIDTH, TRACK_OFFSET,
};
