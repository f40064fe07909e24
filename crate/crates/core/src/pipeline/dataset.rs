use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayD, Ix2, Ix3};
use serde::{Deserialize, Serialize};

use crate::tensor_file;
use crate::{Error, Result};

/// One sparse road-weather-sensor label at a reference pixel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseLabel {
    pub u: usize,
    pub v: usize,
    pub grip: f64,
    #[serde(rename = "d_water_mm")]
    pub d_water: f64,
    #[serde(rename = "d_ice_mm")]
    pub d_ice: f64,
    #[serde(rename = "d_snow_mm")]
    pub d_snow: f64,
    pub weight_raw: f64,
}

impl SparseLabel {
    pub fn layers(&self) -> [f64; 3] {
        [self.d_water, self.d_ice, self.d_snow]
    }
}

/// One matched frame on the reference camera grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: String,
    pub frame_time: f64,
    pub position: [f64; 2],
    /// `H x W x 3` in `[0, 1]`.
    pub rgb: Array3<f32>,
    /// Standardized over the road region.
    pub thermal: Array2<f32>,
    pub reflectance: Array2<f32>,
    pub reflectance_valid: Array2<bool>,
    pub road_mask: Array2<bool>,
    pub labels: Vec<SparseLabel>,
}

impl Sample {
    pub fn height(&self) -> usize {
        self.rgb.dim().0
    }

    pub fn width(&self) -> usize {
        self.rgb.dim().1
    }

    /// Check shared image dimensions and label bounds/domains.
    pub fn validate(&self) -> Result<()> {
        let (h, w, c) = self.rgb.dim();
        if c != 3 {
            return Err(Error::Validation(format!("{}: rgb has {c} channels", self.id)));
        }
        for (name, dim) in [
            ("thermal", self.thermal.dim()),
            ("reflectance", self.reflectance.dim()),
            ("reflectance_valid", self.reflectance_valid.dim()),
            ("road_mask", self.road_mask.dim()),
        ] {
            if dim != (h, w) {
                return Err(Error::Validation(format!(
                    "{}: {name} is {dim:?}, expected {:?}",
                    self.id,
                    (h, w)
                )));
            }
        }
        for l in &self.labels {
            if l.u >= w || l.v >= h {
                return Err(Error::Validation(format!(
                    "{}: label pixel ({}, {}) outside {w}x{h}",
                    self.id, l.u, l.v
                )));
            }
            if !(0.0..=1.0).contains(&l.grip) || l.weight_raw.is_nan() || l.weight_raw < 0.0 {
                return Err(Error::Validation(format!(
                    "{}: label grip {} / weight {} out of domain",
                    self.id, l.grip, l.weight_raw
                )));
            }
        }
        Ok(())
    }
}

/// One row of a split's `manifest.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub frame_time: f64,
    pub pos_x: f64,
    pub pos_y: f64,
}

impl From<&Sample> for ManifestEntry {
    fn from(s: &Sample) -> Self {
        Self {
            id: s.id.clone(),
            frame_time: s.frame_time,
            pos_x: s.position[0],
            pos_y: s.position[1],
        }
    }
}

pub const MANIFEST: &str = "manifest.csv";
const LABELS: &str = "labels.csv";

fn mask_bytes(m: &Array2<bool>) -> Vec<u8> {
    m.iter().map(|&b| b as u8).collect()
}

fn to_mask(path: &Path, t: ArrayD<u8>) -> Result<Array2<bool>> {
    t.into_dimensionality::<Ix2>()
        .map(|a| a.mapv(|b| b == 1))
        .map_err(|_| Error::format(path, "expected a rank-2 mask"))
}

fn read2(path: &Path) -> Result<Array2<f32>> {
    tensor_file::read_f32(path)?
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::format(path, "expected a rank-2 tensor"))
}

/// Write a sample's tensors and labels into `dir` (created if missing).
pub fn write_sample(sample: &Sample, dir: &Path) -> Result<()> {
    sample.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let hw = [sample.height(), sample.width()];
    let rgb: Vec<f32> = sample.rgb.iter().copied().collect();
    tensor_file::write_f32(&dir.join("rgb.ten"), &[hw[0], hw[1], 3], &rgb)?;
    for (name, img) in [("thermal.ten", &sample.thermal), ("refl.ten", &sample.reflectance)] {
        let data: Vec<f32> = img.iter().copied().collect();
        tensor_file::write_f32(&dir.join(name), &hw, &data)?;
    }
    tensor_file::write_u8(&dir.join("refl_mask.ten"), &hw, &mask_bytes(&sample.reflectance_valid))?;
    tensor_file::write_u8(&dir.join("road_mask.ten"), &hw, &mask_bytes(&sample.road_mask))?;
    let path = dir.join(LABELS);
    let mut w = csv::Writer::from_path(&path)?;
    if sample.labels.is_empty() {
        w.write_record(["u", "v", "grip", "d_water_mm", "d_ice_mm", "d_snow_mm", "weight_raw"])?;
    }
    for l in &sample.labels {
        w.serialize(l)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

/// Read the sample stored in `dir` for manifest row `entry`.
pub fn read_sample(dir: &Path, entry: &ManifestEntry) -> Result<Sample> {
    let rgb_path = dir.join("rgb.ten");
    let rgb = tensor_file::read_f32(&rgb_path)?
        .into_dimensionality::<Ix3>()
        .map_err(|_| Error::format(&rgb_path, "expected a rank-3 tensor"))?;
    if rgb.dim().2 != 3 {
        return Err(Error::format(&rgb_path, format!("expected 3 channels, got {}", rgb.dim().2)));
    }
    let mask_path = dir.join("refl_mask.ten");
    let road_path = dir.join("road_mask.ten");
    let labels_path = dir.join(LABELS);
    let labels = csv::Reader::from_path(&labels_path)?
        .deserialize()
        .collect::<std::result::Result<Vec<SparseLabel>, _>>()?;
    let sample = Sample {
        id: entry.id.clone(),
        frame_time: entry.frame_time,
        position: [entry.pos_x, entry.pos_y],
        rgb,
        thermal: read2(&dir.join("thermal.ten"))?,
        reflectance: read2(&dir.join("refl.ten"))?,
        reflectance_valid: to_mask(&mask_path, tensor_file::read_u8(&mask_path)?)?,
        road_mask: to_mask(&road_path, tensor_file::read_u8(&road_path)?)?,
        labels,
    };
    sample.validate()?;
    Ok(sample)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if entries.is_empty() {
        w.write_record(["id", "frame_time", "pos_x", "pos_y"])?;
    }
    for e in entries {
        w.serialize(e)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    Ok(csv::Reader::from_path(path)?
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()?)
}

/// A split directory: `<dir>/manifest.csv` plus one sub-directory per sample id.
#[derive(Clone, Debug)]
pub struct SplitDir {
    pub dir: PathBuf,
}

impl SplitDir {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn write(&self, samples: &[Sample]) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        for s in samples {
            write_sample(s, &self.dir.join(&s.id))?;
        }
        let entries: Vec<ManifestEntry> = samples.iter().map(ManifestEntry::from).collect();
        write_manifest(&self.dir.join(MANIFEST), &entries)
    }

    pub fn manifest(&self) -> Result<Vec<ManifestEntry>> {
        read_manifest(&self.dir.join(MANIFEST))
    }

    pub fn read_all(&self) -> Result<Vec<Sample>> {
        self.manifest()?
            .iter()
            .map(|e| read_sample(&self.dir.join(&e.id), e))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sample() -> Sample {
        let (h, w) = (4, 6);
        Sample {
            id: "s0".into(),
            frame_time: 1.5,
            position: [10.25, -0.1],
            rgb: Array3::from_shape_fn((h, w, 3), |(v, u, c)| (v * 100 + u * 10 + c) as f32 / 1000.0),
            thermal: Array2::from_shape_fn((h, w), |(v, u)| v as f32 - 0.3 * u as f32),
            reflectance: Array2::from_elem((h, w), 0.35),
            reflectance_valid: Array2::from_shape_fn((h, w), |(v, _)| v > 1),
            road_mask: Array2::from_shape_fn((h, w), |(_, u)| u > 0),
            labels: vec![SparseLabel {
                u: 2,
                v: 3,
                grip: 0.1 + 0.2,
                d_water: 1.0 / 3.0,
                d_ice: 0.0,
                d_snow: 2.5,
                weight_raw: 0.7,
            }],
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let tmp = tempfile::tempdir().unwrap();
        let s = tiny_sample();
        write_sample(&s, tmp.path()).unwrap();
        let back = read_sample(tmp.path(), &ManifestEntry::from(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn out_of_bounds_label_fails_validation_on_read() {
        let tmp = tempfile::tempdir().unwrap();
        let s = tiny_sample();
        write_sample(&s, tmp.path()).unwrap();
        let text = fs::read_to_string(tmp.path().join(LABELS)).unwrap();
        fs::write(tmp.path().join(LABELS), text.replace("\n2,3,", "\n9,3,")).unwrap();
        let r = read_sample(tmp.path(), &ManifestEntry::from(&s));
        assert!(matches!(r, Err(Error::Validation(_))), "{r:?}");
    }

    #[test]
    fn corrupted_and_truncated_tensors_are_format_errors() {
        let tmp = tempfile::tempdir().unwrap();
        let s = tiny_sample();
        write_sample(&s, tmp.path()).unwrap();
        let p = tmp.path().join("thermal.ten");
        let mut bytes = fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 2);
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_sample(tmp.path(), &ManifestEntry::from(&s)), Err(Error::Format { .. })));
        bytes[0] = b'Z';
        fs::write(&p, &bytes).unwrap();
        assert!(matches!(read_sample(tmp.path(), &ManifestEntry::from(&s)), Err(Error::Format { .. })));
        // A float tensor where a mask is expected has the wrong payload size.
        write_sample(&s, &tmp.path().join("x")).unwrap();
        fs::copy(tmp.path().join("refl.ten"), tmp.path().join("x/refl_mask.ten")).unwrap();
        assert!(read_sample(&tmp.path().join("x"), &ManifestEntry::from(&s)).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let tmp = tempfile::tempdir().unwrap();
        let s = tiny_sample();
        write_sample(&s, tmp.path()).unwrap();
        tensor_file::write_f32(&tmp.path().join("thermal.ten"), &[2, 2], &[0.0; 4]).unwrap();
        assert!(matches!(read_sample(tmp.path(), &ManifestEntry::from(&s)), Err(Error::Validation(_))));
    }
}
