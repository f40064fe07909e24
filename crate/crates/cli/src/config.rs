use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gripmap::evaluation::OverlayConfig;
use gripmap::model::{parse_modalities, ModelConfig};
use gripmap::pipeline::{DrivePlanConfig, GenerationConfig, Geofence, SplitConfig};
use gripmap::synth::{ProfileKind, SensorRig};
use gripmap::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSection {
    pub profiles: Vec<ProfileKind>,
    pub drives_per_profile: usize,
    #[serde(default)]
    pub plan: DrivePlanConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub fences: Vec<Geofence>,
    pub radius: f64,
    pub buffer: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        let d = SplitConfig::default();
        Self {
            fences: Vec::new(),
            radius: d.radius,
            buffer: d.buffer,
        }
    }
}

impl SplitSection {
    pub fn config(&self) -> SplitConfig {
        SplitConfig {
            radius: self.radius,
            buffer: self.buffer,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Splits evaluated by `eval` and `ablate`.
    pub sets: Vec<String>,
    pub batch_size: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            sets: vec!["val".into(), "test".into()],
            batch_size: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterSection {
    pub set: String,
    pub n: usize,
    pub with_replacement: bool,
}

impl Default for ScatterSection {
    fn default() -> Self {
        Self {
            set: "test".into(),
            n: 50_000,
            with_replacement: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisualizeSection {
    /// Sample ids; empty selects the first sample of `set`.
    pub samples: Vec<String>,
    pub set: String,
    pub overlay: OverlayConfig,
}

impl Default for VisualizeSection {
    fn default() -> Self {
        Self {
            samples: Vec::new(),
            set: "test".into(),
            overlay: OverlayConfig {
                scale: 4,
                ..OverlayConfig::default()
            },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    /// Modality lists such as `"rgb+reflectance"`; empty means all seven subsets.
    pub subsets: Vec<String>,
}

/// The single run configuration file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset directory; relative paths resolve against the config file's directory.
    pub dataset_root: PathBuf,
    /// Directory for checkpoints, logs and reports; defaults to `<dataset_root>/run`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub synth: SynthSection,
    #[serde(default)]
    pub rig: Option<SensorRig>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub scatter: ScatterSection,
    #[serde(default)]
    pub visualize: VisualizeSection,
    #[serde(default)]
    pub ablate: AblateSection,
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| anyhow::anyhow!("invalid configuration: {e}"))?;
        for p in [Some(&mut cfg.dataset_root), cfg.output_dir.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in {}", path.display()))
    }

    /// Apply the seed to every stage that consumes one.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn set_modalities(&mut self, list: &str) -> Result<()> {
        self.model.modalities = parse_modalities(list)?;
        self.model.validate()?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.synth.profiles.is_empty() || self.synth.drives_per_profile == 0 {
            bail!("synth.profiles and synth.drives_per_profile must be non-empty");
        }
        self.rig()?;
        self.synth.generation.sim.grip.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.eval.batch_size == 0 {
            bail!("eval.batch_size must be positive");
        }
        for s in &self.ablate.subsets {
            parse_modalities(s)?;
        }
        Ok(())
    }

    pub fn rig(&self) -> Result<SensorRig> {
        let rig = match &self.rig {
            Some(r) => r.clone(),
            None => SensorRig::desk()?,
        };
        rig.validate()?;
        Ok(rig)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| self.dataset_root.join("run"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
dataset_root = "data"
[synth]
profiles = ["dry"]
drives_per_profile = 1
"#;

    #[test]
    fn minimal_config_uses_defaults_and_resolves_paths() {
        let cfg = RunConfig::parse(MINIMAL, Path::new("/tmp/x")).unwrap();
        assert_eq!(cfg.dataset_root, Path::new("/tmp/x/data"));
        assert_eq!(cfg.output_dir(), Path::new("/tmp/x/data/run"));
        assert_eq!(cfg.train.epochs, 38);
        assert_eq!(cfg.scatter.n, 50_000);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("dataset_root = \"data\"\n", "");
        let err = format!("{:#}", RunConfig::parse(&text, Path::new(".")).unwrap_err());
        assert!(err.contains("dataset_root"), "{err}");
        let text = MINIMAL.replace("drives_per_profile = 1\n", "");
        let err = format!("{:#}", RunConfig::parse(&text, Path::new(".")).unwrap_err());
        assert!(err.contains("drives_per_profile"), "{err}");
    }

    #[test]
    fn downstream_constraints_are_checked_at_parse_time() {
        let text = format!("{MINIMAL}[train]\nbatch_size = 0\n");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = format!("{MINIMAL}[model]\nmodalities = []\n");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = format!("{MINIMAL}[train.augment]\np_hflip = 1.5\n");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
        let text = MINIMAL.replace("\"dry\"", "\"tarmac\"");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn shipped_config_parses() {
        let cfg = RunConfig::parse(include_str!("../../../gripmap.toml"), Path::new(".")).unwrap();
        assert_eq!(cfg.synth.drives_per_profile, 10);
        assert_eq!(cfg.split.fences.len(), 8);
    }
}
