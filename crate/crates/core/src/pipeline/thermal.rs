use ndarray::{Array2, ArrayView2, Zip};

use crate::{Error, Result};

const MIN_SD: f64 = 1e-6;

/// Mean and population standard deviation of `img` over the pixels where `region` is set.
pub fn region_moments(img: ArrayView2<f32>, region: ArrayView2<bool>) -> Result<(f64, f64)> {
    if img.dim() != region.dim() {
        return Err(Error::Input(format!(
            "image {:?} and region {:?} differ in shape",
            img.dim(),
            region.dim()
        )));
    }
    let mut n = 0usize;
    let mut sum = 0.0;
    Zip::from(&img).and(&region).for_each(|&x, &r| {
        if r {
            n += 1;
            sum += x as f64;
        }
    });
    if n == 0 {
        return Err(Error::DegenerateStatistics("empty region".into()));
    }
    let mean = sum / n as f64;
    let mut ss = 0.0;
    Zip::from(&img).and(&region).for_each(|&x, &r| {
        if r {
            ss += (x as f64 - mean).powi(2);
        }
    });
    Ok((mean, (ss / n as f64).sqrt()))
}

/// Standardize a thermal frame with the mean and standard deviation of `road_region`.
pub fn normalize_thermal_frame(raw: ArrayView2<f32>, road_region: ArrayView2<bool>) -> Result<Array2<f32>> {
    let (mean, sd) = region_moments(raw, road_region)?;
    if sd < MIN_SD {
        return Err(Error::DegenerateStatistics(format!(
            "thermal region standard deviation {sd:e} below {MIN_SD:e}"
        )));
    }
    Ok(raw.mapv(|x| ((x as f64 - mean) / sd) as f32))
}

/// A side thermal camera resampled onto the reference grid (NaN where it has no view),
/// with the strip of pixels it shares with the center camera.
#[derive(Clone, Copy, Debug)]
pub struct SideView<'a> {
    pub image: ArrayView2<'a, f32>,
    pub strip: ArrayView2<'a, bool>,
}

/// Composite thermal image and the affine `(a, b)` applied to each side camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Harmonized {
    pub image: Array2<f32>,
    pub left: Option<(f64, f64)>,
    pub right: Option<(f64, f64)>,
}

/// Pixels covered by both images (finite in both).
pub fn overlap_strip(center: ArrayView2<f32>, side: ArrayView2<f32>) -> Array2<bool> {
    Zip::from(&center)
        .and(&side)
        .map_collect(|c, s| c.is_finite() && s.is_finite())
}

fn match_moments(center: ArrayView2<f32>, side: &SideView) -> Result<(f64, f64)> {
    let (mc, sc) = region_moments(center, side.strip)?;
    let (ms, ss) = region_moments(side.image, side.strip)?;
    if ss < MIN_SD || sc < MIN_SD {
        return Err(Error::DegenerateStatistics(format!(
            "overlap strip standard deviation too small (center {sc:e}, side {ss:e})"
        )));
    }
    let a = sc / ss;
    Ok((a, mc - a * ms))
}

/// Rescale the side cameras so their overlap-strip mean and standard deviation match the
/// center camera, then composite: center where it has a value, else left, else right.
pub fn harmonize_side_cameras<'a>(
    center: ArrayView2<f32>,
    left: Option<SideView<'a>>,
    right: Option<SideView<'a>>,
) -> Result<Harmonized> {
    let left_ab = left.as_ref().map(|s| match_moments(center, s)).transpose()?;
    let right_ab = right.as_ref().map(|s| match_moments(center, s)).transpose()?;
    let mut image = center.to_owned();
    for (side, ab) in [(left, left_ab), (right, right_ab)] {
        let (Some(side), Some((a, b))) = (side, ab) else { continue };
        Zip::from(&mut image).and(&side.image).for_each(|out, &s| {
            if !out.is_finite() && s.is_finite() {
                *out = (a * s as f64 + b) as f32;
            }
        });
    }
    Ok(Harmonized {
        image,
        left: left_ab,
        right: right_ab,
    })
}
