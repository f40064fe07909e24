use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of the synthetic grip oracle.
///
/// Each layer lowers grip along a saturating ramp from `g_dry`; water and ice bottom out
/// at `g_min`, snow at `g_snow_floor`. The combined grip is the minimum over layers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripModelParams {
    pub g_dry: f64,
    pub g_snow_floor: f64,
    pub g_min: f64,
    /// Saturation thicknesses in millimeters.
    pub tau_water: f64,
    pub tau_ice: f64,
    pub tau_snow: f64,
}

impl Default for GripModelParams {
    fn default() -> Self {
        Self {
            g_dry: 0.82,
            g_snow_floor: 0.35,
            g_min: 0.10,
            tau_water: 8.0,
            tau_ice: 0.5,
            tau_snow: 2.0,
        }
    }
}

impl GripModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.g_min <= self.g_snow_floor && self.g_snow_floor <= self.g_dry) {
            return Err(Error::Config(
                "grip parameters must satisfy g_min <= g_snow_floor <= g_dry".into(),
            ));
        }
        if !(self.tau_water > 0.0 && self.tau_ice > 0.0 && self.tau_snow > 0.0) {
            return Err(Error::Config("saturation thicknesses must be positive".into()));
        }
        Ok(())
    }
}

fn saturate(x: f64) -> f64 {
    x.min(1.0)
}

/// Grip for the given layer thicknesses (mm).
pub fn grip_oracle(d_water: f64, d_ice: f64, d_snow: f64, p: &GripModelParams) -> Result<f64> {
    if !(d_water >= 0.0 && d_ice >= 0.0 && d_snow >= 0.0) {
        return Err(Error::Domain(format!(
            "layer thicknesses must be non-negative (water={d_water}, ice={d_ice}, snow={d_snow})"
        )));
    }
    let span = p.g_dry - p.g_min;
    let g_water = p.g_dry - span * saturate(d_water / p.tau_water);
    let g_ice = p.g_dry - span * saturate(d_ice / p.tau_ice);
    let g_snow = p.g_dry - (p.g_dry - p.g_snow_floor) * saturate(d_snow / p.tau_snow);
    Ok(g_water.min(g_ice).min(g_snow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const P: GripModelParams = GripModelParams {
        g_dry: 0.82,
        g_snow_floor: 0.35,
        g_min: 0.10,
        tau_water: 8.0,
        tau_ice: 0.5,
        tau_snow: 2.0,
    };

    #[test]
    fn anchor_values() {
        assert_eq!(grip_oracle(0.0, 0.0, 0.0, &P).unwrap(), 0.82);
        assert!((grip_oracle(0.0, 0.0, 2.0, &P).unwrap() - 0.35).abs() < 1e-12);
        assert!((grip_oracle(0.0, 0.0, 7.0, &P).unwrap() - 0.35).abs() < 1e-12);
        assert!((grip_oracle(0.0, 0.5, 0.0, &P).unwrap() - 0.10).abs() < 1e-12);
        assert!((grip_oracle(0.0, 3.0, 0.0, &P).unwrap() - 0.10).abs() < 1e-12);
        assert!((grip_oracle(4.0, 0.0, 0.0, &P).unwrap() - 0.46).abs() < 1e-12);
    }

    #[test]
    fn negative_thickness_is_a_domain_error() {
        assert!(matches!(grip_oracle(-0.1, 0.0, 0.0, &P), Err(Error::Domain(_))));
        assert!(matches!(grip_oracle(0.0, f64::NAN, 0.0, &P), Err(Error::Domain(_))));
    }

    #[test]
    fn defaults_are_valid() {
        GripModelParams::default().validate().unwrap();
        let bad = GripModelParams {
            g_snow_floor: 0.9,
            ..GripModelParams::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn monotone_non_increasing(w in 0.0f64..20.0, i in 0.0f64..3.0, s in 0.0f64..10.0, dw in 0.0f64..5.0, which in 0usize..3) {
            let base = grip_oracle(w, i, s, &P).unwrap();
            let bumped = match which {
                0 => grip_oracle(w + dw, i, s, &P),
                1 => grip_oracle(w, i + dw, s, &P),
                _ => grip_oracle(w, i, s + dw, &P),
            }.unwrap();
            prop_assert!(bumped <= base + 1e-15);
        }

        #[test]
        fn bounded_output(w in 0.0f64..1e3, i in 0.0f64..1e3, s in 0.0f64..1e3) {
            let g = grip_oracle(w, i, s, &P).unwrap();
            prop_assert!((0.10 - 1e-12..=0.82 + 1e-12).contains(&g));
        }
    }
}
