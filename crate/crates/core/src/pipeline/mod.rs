//! From raw recordings to matched, weighted, split and persisted samples.

mod assemble;
mod dataset;
mod generate;
mod reflectance;
mod split;
mod thermal;
mod weights;

pub use assemble::{assemble_frame, assemble_samples, thermal_on_reference, AssemblyConfig};
pub use dataset::{
    read_manifest, read_sample, write_manifest, write_sample, ManifestEntry, Sample, SparseLabel, SplitDir, MANIFEST,
};
pub use generate::{generate_dataset, generate_drive, plan_drives, DrivePlanConfig, DriveSpec, GenerationConfig};
pub use reflectance::{accumulate_reflectance, AccumulationConfig, LidarCalibration, ReflectanceImage};
pub use split::{geofence_split, Geofence, SplitAssignment, SplitConfig, SplitRole};
pub use thermal::{harmonize_side_cameras, normalize_thermal_frame, overlap_strip, region_moments, Harmonized, SideView};
pub use weights::{compute_weights, normalize_raw, raw_weight, WeightMode};
