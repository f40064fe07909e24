use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::model::config::{Modality, ModelConfig};
use crate::model::net::{ModelInputs, ModelParams};
use crate::model::tensor::Tensor;
use crate::pipeline::Sample;
use crate::tensor_file::{self, DecodeError};
use crate::{Error, Result};

/// Stack the modality images of `samples` into model inputs.
pub fn batch_inputs(samples: &[&Sample], modalities: &[Modality]) -> Result<ModelInputs<f32>> {
    let first = samples
        .first()
        .ok_or_else(|| Error::DegenerateBatch("empty batch".into()))?;
    let (h, w) = (first.height(), first.width());
    let tensors = modalities
        .iter()
        .map(|&m| {
            let c = m.channels();
            let mut t = Tensor::zeros(samples.len(), c, h, w);
            for (n, s) in samples.iter().enumerate() {
                if (s.height(), s.width()) != (h, w) {
                    return Err(Error::Input(format!("{} is {}x{}, batch is {h}x{w}", s.id, s.height(), s.width())));
                }
                let dst = t.sample_mut(n);
                let plane = h * w;
                match m {
                    Modality::Rgb => {
                        for ((v, u, ch), &x) in s.rgb.indexed_iter() {
                            dst[ch * plane + v * w + u] = x;
                        }
                    }
                    Modality::Thermal => {
                        for (d, &x) in dst.iter_mut().zip(s.thermal.iter()) {
                            *d = x;
                        }
                    }
                    Modality::Reflectance => {
                        for (i, (&x, &ok)) in s.reflectance.iter().zip(s.reflectance_valid.iter()).enumerate() {
                            dst[i] = if ok { x } else { 0.0 };
                            dst[plane + i] = if ok { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
            Ok((m, t))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelInputs { tensors })
}

/// Dense prediction for one frame: grip and layer thicknesses (mm).
#[derive(Clone, Debug, PartialEq)]
pub struct GripMap {
    pub grip: Array2<f32>,
    pub d_water: Array2<f32>,
    pub d_ice: Array2<f32>,
    pub d_snow: Array2<f32>,
}

impl GripMap {
    /// Split sample `n` of a `N x 4 x H x W` output.
    pub fn from_output(y: &Tensor<f32>, n: usize) -> Self {
        let plane = |c: usize| {
            let data = y.sample(n)[c * y.plane()..(c + 1) * y.plane()].to_vec();
            Array2::from_shape_vec((y.h, y.w), data).expect("plane shape")
        };
        Self {
            grip: plane(0),
            d_water: plane(1),
            d_ice: plane(2),
            d_snow: plane(3),
        }
    }

    pub fn layers_at(&self, u: usize, v: usize) -> [f32; 3] {
        [self.d_water[[v, u]], self.d_ice[[v, u]], self.d_snow[[v, u]]]
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMCK";

/// Checkpoint layout: `GMCK`, `u32` config length, config as TOML text, `u32` tensor
/// count, then per tensor a `u32` name length, the UTF-8 name and a `GMT1` f32 tensor.
pub fn write_checkpoint(path: &Path, params: &ModelParams<f32>) -> Result<()> {
    let config = toml::to_string(&params.config).map_err(|e| Error::Config(e.to_string()))?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&(config.len() as u32).to_le_bytes())?;
        w.write_all(config.as_bytes())?;
        let convs = params.convs();
        w.write_all(&(2 * convs.len() as u32).to_le_bytes())?;
        for (name, c) in convs {
            let s = c.shape;
            for (suffix, shape, data) in [
                ("weight", vec![s.cout, s.cin, s.k, s.k], &c.weight),
                ("bias", vec![s.cout], &c.bias),
            ] {
                let full = format!("{name}.{suffix}");
                w.write_all(&(full.len() as u32).to_le_bytes())?;
                w.write_all(full.as_bytes())?;
                tensor_file::encode_f32(&mut w, &shape, data)?;
            }
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, DecodeError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, max: usize) -> Result<String, DecodeError> {
    let len = read_u32(r)? as usize;
    if len > max {
        return Err(DecodeError::Malformed(format!("string length {len} exceeds {max}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| DecodeError::Malformed("string is not UTF-8".into()))
}

fn decode_checkpoint<R: Read>(r: &mut R) -> Result<ModelParams<f32>, DecodeError> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(DecodeError::Malformed(format!("bad magic {magic:?}")));
    }
    let text = read_string(r, 1 << 20)?;
    let config: ModelConfig =
        toml::from_str(&text).map_err(|e| DecodeError::Malformed(format!("config block: {e}")))?;
    let mut params = ModelParams::zeros(&config).map_err(|e| DecodeError::Malformed(e.to_string()))?;
    let count = read_u32(r)? as usize;
    let mut slots = params.convs_mut();
    if count != 2 * slots.len() {
        return Err(DecodeError::Malformed(format!(
            "{count} tensors, config implies {}",
            2 * slots.len()
        )));
    }
    for _ in 0..count {
        let name = read_string(r, 4096)?;
        let t = tensor_file::decode_f32(r)?;
        let (base, suffix) = name
            .rsplit_once('.')
            .ok_or_else(|| DecodeError::Malformed(format!("tensor name {name:?}")))?;
        let conv = slots
            .iter_mut()
            .find(|(n, _)| n == base)
            .map(|(_, c)| c)
            .ok_or_else(|| DecodeError::Malformed(format!("unexpected tensor {name:?}")))?;
        let s = conv.shape;
        let (expected, dst) = match suffix {
            "weight" => (vec![s.cout, s.cin, s.k, s.k], &mut conv.weight),
            "bias" => (vec![s.cout], &mut conv.bias),
            _ => return Err(DecodeError::Malformed(format!("unexpected tensor {name:?}"))),
        };
        if t.shape() != expected.as_slice() {
            return Err(DecodeError::Malformed(format!(
                "{name} has shape {:?}, expected {expected:?}",
                t.shape()
            )));
        }
        *dst = t.iter().copied().collect();
    }
    drop(slots);
    if !params.all_finite() {
        return Err(DecodeError::Malformed("non-finite parameters".into()));
    }
    Ok(params)
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams<f32>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    decode_checkpoint(&mut r).map_err(|e| e.at(path))
}
