//! gripmap: dense road-surface grip maps from pixelwise-fused RGB, thermal and
//! LiDAR-reflectance images, trained with sparse road-weather-sensor labels.
//!
//! The crate is organized along the data flow:
//!
//! 1. [`synth`] generates road scenes with water/ice/snow layers and simulates a
//!    sensor rig driving over them (camera, thermal cameras, LiDAR, road weather sensor).
//! 2. [`geometry`] holds the pose, projection and range-image machinery used to match
//!    every modality to the reference camera.
//! 3. [`pipeline`] turns recordings into matched [`pipeline::Sample`]s, weights the
//!    sparse labels, splits by geofence and persists datasets.
//! 4. [`model`] is a multi-encoder feature pyramid network with its own small
//!    CPU tensor engine (forward and backward passes).
//! 5. [`training`] implements the weighted two-task loss, augmentation and the
//!    optimization loop.
//! 6. [`evaluation`] computes weighted per-frame RMSE, modality ablations, scatter
//!    exports and grip-map overlays.

pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod model;
pub mod pipeline;
pub mod raster;
pub mod synth;
pub mod tensor_file;
pub mod training;

pub use error::{Error, Result};
