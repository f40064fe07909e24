use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Rgb,
    Thermal,
    Reflectance,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Thermal, Modality::Reflectance];

    /// Input channels: RGB, one standardized thermal channel, reflectance plus validity.
    pub fn channels(self) -> usize {
        match self {
            Modality::Rgb => 3,
            Modality::Thermal => 1,
            Modality::Reflectance => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Thermal => "thermal",
            Modality::Reflectance => "reflectance",
        }
    }

    /// Short table label: `RGB`, `T`, `R`.
    pub fn short(self) -> &'static str {
        match self {
            Modality::Rgb => "RGB",
            Modality::Thermal => "T",
            Modality::Reflectance => "R",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(Modality::Rgb),
            "thermal" | "t" => Ok(Modality::Thermal),
            "reflectance" | "r" => Ok(Modality::Reflectance),
            other => Err(Error::Config(format!("unknown modality {other:?}"))),
        }
    }
}

/// Parse a comma- or `+`-separated modality list into canonical order.
pub fn parse_modalities(s: &str) -> Result<Vec<Modality>> {
    let mut out = s
        .split([',', '+'])
        .filter(|p| !p.trim().is_empty())
        .map(Modality::from_str)
        .collect::<Result<Vec<_>>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("empty modality list".into()));
    }
    Ok(out)
}

/// `RGB + T + R` style label.
pub fn modalities_label(m: &[Modality]) -> String {
    m.iter().map(|m| m.short()).collect::<Vec<_>>().join(" + ")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Kept in canonical order (rgb, thermal, reflectance).
    pub modalities: Vec<Modality>,
    /// Encoder channels at each scale; length `num_scales`.
    pub encoder_widths: Vec<usize>,
    pub num_scales: usize,
    /// Residual blocks after each stride-2 stage convolution.
    pub blocks_per_stage: usize,
    pub decoder_width: usize,
    pub dropout_final: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            modalities: Modality::ALL.to_vec(),
            encoder_widths: vec![16, 32, 64, 128],
            num_scales: 4,
            blocks_per_stage: 1,
            decoder_width: 64,
            dropout_final: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn with_modalities(mut self, modalities: &[Modality]) -> Self {
        let mut m = modalities.to_vec();
        m.sort();
        m.dedup();
        self.modalities = m;
        self
    }

    /// Stage layout of an 18-layer residual encoder: four stages of two basic blocks.
    pub fn resnet18_layout() -> Self {
        Self {
            encoder_widths: vec![64, 128, 256, 512],
            blocks_per_stage: 2,
            decoder_width: 128,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.modalities.is_empty() {
            return Err(Error::Config("model needs at least one modality".into()));
        }
        if self.modalities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "modalities {:?} must be unique and in canonical order",
                self.modalities
            )));
        }
        if self.num_scales == 0 || self.encoder_widths.len() != self.num_scales {
            return Err(Error::Config(format!(
                "{} encoder widths for {} scales",
                self.encoder_widths.len(),
                self.num_scales
            )));
        }
        if self.encoder_widths.contains(&0) || self.decoder_width == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_final) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout_final)));
        }
        Ok(())
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << self.num_scales
    }

    /// Pyramid level the decoder emits at: stride 4, or stride 2 with a single scale.
    pub fn head_level(&self) -> usize {
        1.min(self.num_scales - 1)
    }

    /// Concatenated encoder channels entering the decoder at `scale`.
    pub fn fused_channels(&self, scale: usize) -> usize {
        self.modalities.len() * self.encoder_widths[scale]
    }
}

fn conv_params(cin: usize, cout: usize, k: usize) -> usize {
    cout * cin * k * k + cout
}

/// Learnable scalars of one modality encoder.
pub fn encoder_param_count(config: &ModelConfig, modality: Modality) -> usize {
    let mut cin = modality.channels();
    let mut total = 0;
    for &w in &config.encoder_widths {
        total += conv_params(cin, w, 3) + config.blocks_per_stage * 2 * conv_params(w, w, 3);
        cin = w;
    }
    total
}

/// Exact number of learnable scalars for `config`.
pub fn count_params(config: &ModelConfig) -> Result<usize> {
    config.validate()?;
    let encoders: usize = config.modalities.iter().map(|&m| encoder_param_count(config, m)).sum();
    let d = config.decoder_width;
    let lateral: usize = (0..config.num_scales).map(|s| conv_params(config.fused_channels(s), d, 1)).sum();
    let head = conv_params(d, d, 3) + conv_params(d, 4, 1);
    Ok(encoders + lateral + head)
}
