use ndarray::{Array2, Array3, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::pipeline::Sample;
use crate::raster::{bilinear, gaussian_blur, gaussian_blur3, nearest_index};
use crate::{Error, Result};

/// Augmentation probabilities and magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub p_scale_rotation: f64,
    pub p_hflip: f64,
    pub p_blur: f64,
    pub p_color_jitter: f64,
    /// Scale factor range is `1 ± max_scale`.
    pub max_scale: f64,
    pub max_rotation_deg: f64,
    pub blur_sigma: [f64; 2],
    /// Brightness, contrast and saturation factors are drawn from `1 ± jitter`.
    pub jitter: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_scale_rotation: 0.3,
            p_hflip: 0.5,
            p_blur: 0.3,
            p_color_jitter: 0.3,
            max_scale: 0.1,
            max_rotation_deg: 5.0,
            blur_sigma: [0.3, 1.0],
            jitter: 0.2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            p_scale_rotation: 0.0,
            p_hflip: 0.0,
            p_blur: 0.0,
            p_color_jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [self.p_scale_rotation, self.p_hflip, self.p_blur, self.p_color_jitter] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("augmentation probability {p} outside [0, 1]")));
            }
        }
        if !(0.0..1.0).contains(&self.max_scale) || !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::Config("augmentation magnitudes must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Mirror every image, mask and label column: `u -> W - 1 - u`.
pub fn hflip(s: &Sample) -> Sample {
    let w = s.width();
    let mut out = s.clone();
    out.rgb.invert_axis(Axis(1));
    out.thermal.invert_axis(Axis(1));
    out.reflectance.invert_axis(Axis(1));
    out.reflectance_valid.invert_axis(Axis(1));
    out.road_mask.invert_axis(Axis(1));
    for l in &mut out.labels {
        l.u = w - 1 - l.u;
    }
    // Inverted views are not in standard layout; re-materialize.
    out.rgb = out.rgb.as_standard_layout().to_owned();
    out.thermal = out.thermal.as_standard_layout().to_owned();
    out.reflectance = out.reflectance.as_standard_layout().to_owned();
    out.reflectance_valid = out.reflectance_valid.as_standard_layout().to_owned();
    out.road_mask = out.road_mask.as_standard_layout().to_owned();
    out
}

/// Scale by `scale` and rotate by `angle_deg` (counter-clockwise on screen) about the
/// image center. Images are resampled bilinearly, masks and reflectance by nearest
/// pixel; labels move with the image and are dropped when they leave the frame.
pub fn scale_rotate(s: &Sample, scale: f64, angle_deg: f64) -> Sample {
    let (h, w) = (s.height(), s.width());
    let (cu, cv) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    // Rows grow downward, so a screen counter-clockwise turn is clockwise in (u, v).
    let forward = |u: f64, v: f64| {
        let (du, dv) = (u - cu, v - cv);
        (cu + scale * (cos * du + sin * dv), cv + scale * (-sin * du + cos * dv))
    };
    let inverse = |u: f64, v: f64| {
        let (du, dv) = ((u - cu) / scale, (v - cv) / scale);
        (cu + cos * du - sin * dv, cv + sin * du + cos * dv)
    };
    let src: Array2<(f64, f64)> = Array2::from_shape_fn((h, w), |(v, u)| inverse(u as f64, v as f64));
    let nearest = |p: (f64, f64)| Some((nearest_index(p.1, h)?, nearest_index(p.0, w)?));

    let mut rgb = Array3::zeros((h, w, 3));
    for c in 0..3 {
        let plane = s.rgb.index_axis(Axis(2), c);
        for ((v, u), &(su, sv)) in src.indexed_iter() {
            rgb[[v, u, c]] = bilinear(plane, su, sv).unwrap_or(0.0);
        }
    }
    let thermal = src.map(|&(su, sv)| bilinear(s.thermal.view(), su, sv).unwrap_or(0.0));
    let pick = |p: &(f64, f64)| nearest(*p);
    let reflectance_valid = src.map(|p| pick(p).is_some_and(|i| s.reflectance_valid[i]));
    let reflectance = src.map(|p| pick(p).map_or(0.0, |i| if s.reflectance_valid[i] { s.reflectance[i] } else { 0.0 }));
    let road_mask = src.map(|p| pick(p).is_some_and(|i| s.road_mask[i]));
    let labels = s
        .labels
        .iter()
        .filter_map(|l| {
            let (u, v) = forward(l.u as f64, l.v as f64);
            let (v, u) = nearest((u, v))?;
            Some(crate::pipeline::SparseLabel { u, v, ..*l })
        })
        .collect();
    Sample {
        rgb,
        thermal,
        reflectance,
        reflectance_valid,
        road_mask,
        labels,
        ..s.clone()
    }
}

fn color_jitter<R: Rng>(rgb: &mut Array3<f32>, amount: f64, rng: &mut R) {
    let mut draw = || rng.random_range(1.0 - amount..=1.0 + amount) as f32;
    let (brightness, contrast, saturation) = (draw(), draw(), draw());
    let mean = rgb.mean().unwrap_or(0.0);
    for mut px in rgb.lanes_mut(Axis(2)) {
        let gray = (px[0] + px[1] + px[2]) / 3.0;
        for c in px.iter_mut() {
            let x = gray + (*c - gray) * saturation;
            let x = mean + (x - mean) * contrast;
            *c = (x * brightness).clamp(0.0, 1.0);
        }
    }
}

/// Apply scale/rotation, flip, blur and color jitter, each with its probability.
pub fn augment<R: Rng>(sample: &Sample, cfg: &AugmentConfig, rng: &mut R) -> Sample {
    let mut s = sample.clone();
    if rng.random::<f64>() < cfg.p_scale_rotation {
        let scale = rng.random_range(1.0 - cfg.max_scale..=1.0 + cfg.max_scale);
        let angle = rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg);
        s = scale_rotate(&s, scale, angle);
    }
    if rng.random::<f64>() < cfg.p_hflip {
        s = hflip(&s);
    }
    if rng.random::<f64>() < cfg.p_blur {
        let sigma = rng.random_range(cfg.blur_sigma[0]..=cfg.blur_sigma[1]);
        s.rgb = gaussian_blur3(&s.rgb, sigma);
        s.thermal = gaussian_blur(&s.thermal, sigma);
    }
    if rng.random::<f64>() < cfg.p_color_jitter {
        color_jitter(&mut s.rgb, cfg.jitter, rng);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::SparseLabel;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Sample {
        let (h, w) = (32, 48);
        Sample {
            id: "a".into(),
            frame_time: 0.0,
            position: [0.0, 0.0],
            rgb: Array3::from_shape_fn((h, w, 3), |(v, u, c)| ((u + 2 * v + c) % 11) as f32 / 10.0),
            thermal: Array2::from_shape_fn((h, w), |(v, u)| (u as f32 - v as f32) / 10.0),
            reflectance: Array2::from_elem((h, w), 0.3),
            reflectance_valid: Array2::from_shape_fn((h, w), |(v, _)| v > 20),
            road_mask: Array2::from_shape_fn((h, w), |(v, _)| v > 12),
            labels: (0..20)
                .map(|i| SparseLabel {
                    u: 5 + 2 * i,
                    v: 14 + i % 17,
                    grip: 0.5,
                    d_water: 0.0,
                    d_ice: 0.0,
                    d_snow: 0.0,
                    weight_raw: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn hflip_is_an_involution() {
        let s = sample();
        let f = hflip(&s);
        assert_eq!(f.labels[0].u, 48 - 1 - 5);
        assert_eq!(f.thermal[[3, 0]], s.thermal[[3, 47]]);
        assert_eq!(hflip(&f), s);
    }

    #[test]
    fn disabled_config_is_identity() {
        let s = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            assert_eq!(augment(&s, &AugmentConfig::disabled(), &mut rng), s);
        }
    }

    #[test]
    fn rotation_round_trip_keeps_labels_within_a_pixel() {
        let s = sample();
        let back = scale_rotate(&scale_rotate(&s, 1.0, 5.0), 1.0, -5.0);
        assert_eq!(back.labels.len(), s.labels.len());
        for (a, b) in back.labels.iter().zip(&s.labels) {
            assert!(a.u.abs_diff(b.u) <= 1 && a.v.abs_diff(b.v) <= 1, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn labels_follow_image_content() {
        // A label on a unique bright pixel must land on that pixel after the transform.
        let mut s = sample();
        s.thermal.fill(0.0);
        s.thermal[[20, 30]] = 100.0;
        s.labels = vec![SparseLabel { u: 30, v: 20, ..s.labels[0] }];
        let t = scale_rotate(&s, 1.08, 4.0);
        let l = t.labels[0];
        let peak = t
            .thermal
            .indexed_iter()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        assert!(l.v.abs_diff(peak.0) <= 1 && l.u.abs_diff(peak.1) <= 1, "{l:?} vs {peak:?}");
    }
}
