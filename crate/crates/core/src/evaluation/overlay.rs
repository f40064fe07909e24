use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, Pose};
use crate::pipeline::SparseLabel;
use crate::synth::render::{cast_pixels, Surface};
use crate::synth::{SceneSpec, TRACK_HALF_WIDTH, TRACK_OFFSET};
use crate::{Error, Result};

/// Anchors of the blue to red ramp, low grip first.
const RAMP: [[f32; 3]; 5] = [
    [0.19, 0.21, 0.58],
    [0.27, 0.56, 0.77],
    [0.94, 0.90, 0.60],
    [0.96, 0.43, 0.26],
    [0.65, 0.00, 0.15],
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlayConfig {
    /// Grip values mapped to the two ends of the ramp.
    pub grip_range: [f64; 2],
    /// Opacity of the grip colors over the road.
    pub alpha: f32,
    /// Side of the label squares in output pixels; 0 disables them.
    pub label_square: usize,
    /// Integer nearest-neighbour upscaling applied before drawing labels.
    pub scale: usize,
}

impl Default for OverlayConfig {
    fn default() -> Self {
        Self {
            grip_range: [0.1, 0.82],
            alpha: 0.6,
            label_square: 14,
            scale: 1,
        }
    }
}

/// Piecewise linear ramp color of `grip`, clamped to `[0, 1]` and then to `range`.
pub fn grip_color(grip: f64, range: [f64; 2]) -> [f32; 3] {
    let g = grip.clamp(0.0, 1.0);
    let t = ((g - range[0]) / (range[1] - range[0])).clamp(0.0, 1.0) as f32;
    let x = t * (RAMP.len() - 1) as f32;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f32;
    std::array::from_fn(|c| RAMP[i][c] * (1.0 - f) + RAMP[i + 1][c] * f)
}

/// Grip colors blended over the road pixels of `rgb` (`H x W x 3`, `[0, 1]`), then
/// label squares centered on each label pixel, all as 8-bit RGB.
pub fn render_overlay(
    rgb: &Array3<f32>,
    grip: &Array2<f32>,
    road_mask: &Array2<bool>,
    labels: &[SparseLabel],
    cfg: &OverlayConfig,
) -> Result<Array3<u8>> {
    let (h, w, _) = rgb.dim();
    if grip.dim() != (h, w) || road_mask.dim() != (h, w) {
        return Err(Error::Input(format!(
            "overlay inputs disagree: rgb {h}x{w}, grip {:?}, mask {:?}",
            grip.dim(),
            road_mask.dim()
        )));
    }
    let s = cfg.scale.max(1);
    let mut out = Array3::zeros((h * s, w * s, 3));
    for ((v, u, c), o) in out.indexed_iter_mut() {
        let (sv, su) = (v / s, u / s);
        let base = rgb[[sv, su, c]];
        let x = if road_mask[[sv, su]] {
            let g = grip_color(grip[[sv, su]] as f64, cfg.grip_range)[c];
            (1.0 - cfg.alpha) * base + cfg.alpha * g
        } else {
            base
        };
        *o = to_u8(x);
    }
    for l in labels {
        paint_square(&mut out, l, cfg);
    }
    Ok(out)
}

fn to_u8(x: f32) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// A `label_square`-sided square centered on the (scaled) label pixel, clipped at borders.
fn paint_square(img: &mut Array3<u8>, l: &SparseLabel, cfg: &OverlayConfig) {
    let n = cfg.label_square;
    if n == 0 {
        return;
    }
    let (h, w, _) = img.dim();
    let s = cfg.scale.max(1);
    let (cu, cv) = ((l.u * s + s / 2) as i64, (l.v * s + s / 2) as i64);
    let lo = -((n / 2) as i64);
    let color = grip_color(l.grip, cfg.grip_range).map(to_u8);
    for dv in lo..lo + n as i64 {
        for du in lo..lo + n as i64 {
            let (u, v) = (cu + du, cv + dv);
            if u >= 0 && v >= 0 && (u as usize) < w && (v as usize) < h {
                for c in 0..3 {
                    img[[v as usize, u as usize, c]] = color[c];
                }
            }
        }
    }
}

pub fn write_png(path: &Path, img: &Array3<u8>) -> Result<()> {
    let (h, w, c) = img.dim();
    if c != 3 {
        return Err(Error::Input(format!("expected 3 channels, got {c}")));
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let data: Vec<u8> = img.iter().copied().collect();
    enc.write_header()
        .and_then(|mut wr| wr.write_image_data(&data))
        .map_err(|e| Error::format(path, e.to_string()))
}

/// Mean predicted grip inside the tire tracks and in the snow bands beside them.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackBands {
    pub track_mean: f64,
    pub adjacent_mean: f64,
    pub track_pixels: usize,
    pub adjacent_pixels: usize,
}

impl TrackBands {
    pub fn contrast(&self) -> f64 {
        self.track_mean - self.adjacent_mean
    }
}

/// Classify road pixels within `max_distance` of the camera by their lateral offset
/// from the scene's track center. Track pixels lie well inside a track; adjacent
/// pixels lie 0.15 to 0.45 m outside a track edge.
pub fn track_band_means(
    grip: &Array2<f32>,
    scene: &SceneSpec,
    world_from_camera: &Pose,
    k: &CameraIntrinsics,
    max_distance: f64,
) -> Result<TrackBands> {
    let center = scene
        .track_center
        .ok_or_else(|| Error::Input("scene has no tire tracks".into()))?;
    if grip.dim() != (k.height, k.width) {
        return Err(Error::Input(format!("grip map {:?} does not match the camera", grip.dim())));
    }
    let hits = cast_pixels(scene, world_from_camera, k);
    let (mut track, mut adjacent) = (Vec::new(), Vec::new());
    for (idx, hit) in hits.indexed_iter() {
        let Surface::Road { y, .. } = hit.surface else { continue };
        if hit.distance > max_distance {
            continue;
        }
        let edge = ((y - center).abs() - TRACK_OFFSET).abs() - TRACK_HALF_WIDTH;
        if edge <= -0.05 {
            track.push(grip[idx] as f64);
        } else if (0.15..=0.45).contains(&edge) {
            adjacent.push(grip[idx] as f64);
        }
    }
    if track.is_empty() || adjacent.is_empty() {
        return Err(Error::Input("no pixels in the track or adjacent band".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(TrackBands {
        track_mean: mean(&track),
        adjacent_mean: mean(&adjacent),
        track_pixels: track.len(),
        adjacent_pixels: adjacent.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn label(u: usize, v: usize) -> SparseLabel {
        SparseLabel {
            u,
            v,
            grip: 0.3,
            d_water: 0.0,
            d_ice: 0.0,
            d_snow: 0.0,
            weight_raw: 1.0,
        }
    }

    #[test]
    fn ramp_ends() {
        assert_eq!(grip_color(0.82, [0.1, 0.82]), RAMP[4]);
        assert_eq!(grip_color(0.95, [0.1, 0.82]), RAMP[4]);
        assert_eq!(grip_color(0.1, [0.1, 0.82]), RAMP[0]);
        assert_eq!(grip_color(-3.0, [0.1, 0.82]), RAMP[0]);
    }

    #[test]
    fn uniform_grip_gives_uniform_road_color() {
        let rgb = Array3::from_elem((8, 10, 3), 0.5f32);
        let grip = Array2::from_elem((8, 10), 0.82f32);
        let mask = Array2::from_shape_fn((8, 10), |(v, _)| v >= 4);
        let cfg = OverlayConfig::default();
        let img = render_overlay(&rgb, &grip, &mask, &[], &cfg).unwrap();
        let road: Vec<u8> = (0..3).map(|c| img[[5, 3, c]]).collect();
        for v in 4..8 {
            for u in 0..10 {
                assert_eq!((0..3).map(|c| img[[v, u, c]]).collect::<Vec<_>>(), road);
            }
        }
        let expected: Vec<u8> = (0..3).map(|c| to_u8(0.4 * 0.5 + 0.6 * RAMP[4][c])).collect();
        assert_eq!(road, expected);
        assert_eq!(img[[0, 0, 0]], to_u8(0.5));
    }

    #[test]
    fn empty_mask_leaves_rgb_unmodified() {
        let rgb = Array3::from_shape_fn((6, 7, 3), |(v, u, c)| (v + u + c) as f32 / 20.0);
        let img = render_overlay(&rgb, &Array2::zeros((6, 7)), &Array2::from_elem((6, 7), false), &[], &Default::default())
            .unwrap();
        assert_eq!(img, rgb.mapv(to_u8));
    }

    #[test]
    fn label_squares_are_fourteen_pixels_and_clip() {
        let rgb = Array3::zeros((40, 40, 3));
        let off = Array2::from_elem((40, 40), false);
        let cfg = OverlayConfig::default();
        let painted = |img: &Array3<u8>| img.outer_iter().flat_map(|row| row.outer_iter().map(|p| p[2] > 0).collect::<Vec<_>>()).filter(|&b| b).count();
        let img = render_overlay(&rgb, &Array2::zeros((40, 40)), &off, &[label(20, 20)], &cfg).unwrap();
        assert_eq!(painted(&img), 14 * 14);
        let img = render_overlay(&rgb, &Array2::zeros((40, 40)), &off, &[label(0, 0)], &cfg).unwrap();
        assert_eq!(painted(&img), 7 * 7);
    }

    #[test]
    fn png_is_written() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("o.png");
        write_png(&p, &Array3::from_elem((4, 5, 3), 200u8)).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
