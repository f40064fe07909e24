use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRole {
    Train,
    Val,
    Test,
    Excluded,
}

impl SplitRole {
    pub const ALL: [SplitRole; 4] = [SplitRole::Train, SplitRole::Val, SplitRole::Test, SplitRole::Excluded];

    pub fn name(self) -> &'static str {
        match self {
            SplitRole::Train => "train",
            SplitRole::Val => "val",
            SplitRole::Test => "test",
            SplitRole::Excluded => "excluded",
        }
    }
}

impl fmt::Display for SplitRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SplitRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split role {s:?}")))
    }
}

/// A held-out circular area; `role` must be `Val` or `Test`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Geofence {
    pub center: [f64; 2],
    pub role: SplitRole,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub radius: f64,
    pub buffer: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            radius: 200.0,
            buffer: 55.0,
        }
    }
}

pub type SplitAssignment = BTreeMap<String, SplitRole>;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Assign every sample to a split: inside a geofence → its role; within `buffer` of a
/// geofence border → excluded; otherwise train.
pub fn geofence_split(
    positions: &BTreeMap<String, [f64; 2]>,
    fences: &[Geofence],
    cfg: &SplitConfig,
) -> Result<SplitAssignment> {
    if fences.is_empty() {
        return Err(Error::Config("no geofence centers".into()));
    }
    if !(cfg.radius > 0.0 && cfg.buffer >= 0.0) {
        return Err(Error::Config(format!(
            "geofence radius {} and buffer {} must be positive",
            cfg.radius, cfg.buffer
        )));
    }
    for (i, a) in fences.iter().enumerate() {
        if !matches!(a.role, SplitRole::Val | SplitRole::Test) {
            return Err(Error::Config(format!("geofence {i} has role {}", a.role)));
        }
        for b in &fences[i + 1..] {
            if a.role != b.role && dist(a.center, b.center) < 2.0 * cfg.radius {
                return Err(Error::Config(format!(
                    "overlapping geofences at {:?} ({}) and {:?} ({})",
                    a.center, a.role, b.center, b.role
                )));
            }
        }
    }
    Ok(positions
        .iter()
        .map(|(id, &p)| {
            let nearest = fences
                .iter()
                .map(|f| (dist(p, f.center), f.role))
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .expect("non-empty fences");
            let role = if nearest.0 <= cfg.radius {
                nearest.1
            } else if nearest.0 < cfg.radius + cfg.buffer {
                SplitRole::Excluded
            } else {
                SplitRole::Train
            };
            (id.clone(), role)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(p: [f64; 2]) -> SplitRole {
        let fences = [Geofence {
            center: [0.0, 0.0],
            role: SplitRole::Val,
        }];
        let pos = BTreeMap::from([("a".to_string(), p)]);
        geofence_split(&pos, &fences, &SplitConfig::default()).unwrap()["a"]
    }

    #[test]
    fn examples() {
        assert_eq!(one([100.0, 0.0]), SplitRole::Val);
        assert_eq!(one([0.0, 230.0]), SplitRole::Excluded);
        assert_eq!(one([300.0, 0.0]), SplitRole::Train);
    }

    #[test]
    fn conflicting_overlap_is_rejected() {
        let fences = [
            Geofence {
                center: [0.0, 0.0],
                role: SplitRole::Val,
            },
            Geofence {
                center: [300.0, 0.0],
                role: SplitRole::Test,
            },
        ];
        let r = geofence_split(&BTreeMap::new(), &fences, &SplitConfig::default());
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
