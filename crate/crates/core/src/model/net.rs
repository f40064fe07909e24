use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::model::config::{Modality, ModelConfig};
use crate::model::real::Real;
use crate::model::tensor::{self as k, ConvShape, Tensor};
use crate::{Error, Result};

/// Convolution weights `cout x cin x k x k` and bias.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv<T> {
    pub shape: ConvShape,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Conv<T> {
    pub fn zeros(shape: ConvShape) -> Self {
        Self {
            shape,
            weight: vec![T::zero(); shape.weight_len()],
            bias: vec![T::zero(); shape.cout],
        }
    }

    /// Normal weights with standard deviation `gain * sqrt(1 / fan_in)`; zero bias.
    fn random(shape: ConvShape, gain: f64, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (shape.cin * shape.k * shape.k) as f64;
        let normal = Normal::new(0.0, gain / fan_in.sqrt()).expect("positive sd");
        Self {
            shape,
            weight: (0..shape.weight_len()).map(|_| T::of(normal.sample(rng))).collect(),
            bias: vec![T::zero(); shape.cout],
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Tensor<T> {
        k::conv2d(x, &self.shape, &self.weight, &self.bias)
    }

    fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>, grad: &mut Conv<T>, need_dx: bool) -> Option<Tensor<T>> {
        k::conv2d_backward(x, &self.shape, &self.weight, dy, &mut grad.weight, &mut grad.bias, need_dx)
    }

    fn cast<U: Real>(&self) -> Conv<U> {
        let c = |v: &[T]| v.iter().map(|x| U::of(x.to_f64().expect("finite"))).collect();
        Conv {
            shape: self.shape,
            weight: c(&self.weight),
            bias: c(&self.bias),
        }
    }
}

/// `relu(x + c2(relu(c1(x))))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub c1: Conv<T>,
    pub c2: Conv<T>,
}

/// Stride-2 convolution with ReLU, then residual blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Stage<T> {
    pub down: Conv<T>,
    pub blocks: Vec<Block<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<T> {
    pub modality: Modality,
    pub stages: Vec<Stage<T>>,
}

/// All learnable tensors of the multi-encoder pyramid network.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T = f32> {
    pub config: ModelConfig,
    pub encoders: Vec<Encoder<T>>,
    /// 1x1 projections of the fused features at each scale to the decoder width.
    pub lateral: Vec<Conv<T>>,
    pub head: Conv<T>,
    pub out: Conv<T>,
}

fn shape(cin: usize, cout: usize, k: usize, stride: usize) -> ConvShape {
    ConvShape { cin, cout, k, stride }
}

impl<T: Real> ModelParams<T> {
    fn build(config: &ModelConfig, mut make: impl FnMut(ConvShape, f64) -> Conv<T>) -> Result<Self> {
        config.validate()?;
        let he = std::f64::consts::SQRT_2;
        let encoders = config
            .modalities
            .iter()
            .map(|&m| {
                let mut cin = m.channels();
                let stages = config
                    .encoder_widths
                    .iter()
                    .map(|&w| {
                        let down = make(shape(cin, w, 3, 2), he);
                        cin = w;
                        let blocks = (0..config.blocks_per_stage)
                            .map(|_| Block {
                                c1: make(shape(w, w, 3, 1), he),
                                // Residual branches start at half the He scale.
                                c2: make(shape(w, w, 3, 1), 0.5 * he),
                            })
                            .collect();
                        Stage { down, blocks }
                    })
                    .collect();
                Encoder { modality: m, stages }
            })
            .collect();
        let d = config.decoder_width;
        let lateral = (0..config.num_scales)
            .map(|s| make(shape(config.fused_channels(s), d, 1, 1), 1.0))
            .collect();
        let head = make(shape(d, d, 3, 1), he);
        // Small output weights keep initial predictions near zero.
        let out = make(shape(d, 4, 1, 1), 0.01);
        Ok(Self {
            config: config.clone(),
            encoders,
            lateral,
            head,
            out,
        })
    }

    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Self::build(config, |s, _| Conv::zeros(s))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    /// Every convolution with a stable dotted name, in a fixed order.
    pub fn convs(&self) -> Vec<(String, &Conv<T>)> {
        let mut out = Vec::new();
        for e in &self.encoders {
            for (s, st) in e.stages.iter().enumerate() {
                out.push((format!("enc.{}.s{s}.down", e.modality), &st.down));
                for (b, blk) in st.blocks.iter().enumerate() {
                    out.push((format!("enc.{}.s{s}.b{b}.c1", e.modality), &blk.c1));
                    out.push((format!("enc.{}.s{s}.b{b}.c2", e.modality), &blk.c2));
                }
            }
        }
        for (s, l) in self.lateral.iter().enumerate() {
            out.push((format!("dec.lateral{s}"), l));
        }
        out.push(("head.conv".into(), &self.head));
        out.push(("head.out".into(), &self.out));
        out
    }

    pub fn convs_mut(&mut self) -> Vec<(String, &mut Conv<T>)> {
        let mut out = Vec::new();
        for e in &mut self.encoders {
            let m = e.modality;
            for (s, st) in e.stages.iter_mut().enumerate() {
                out.push((format!("enc.{m}.s{s}.down"), &mut st.down));
                for (b, blk) in st.blocks.iter_mut().enumerate() {
                    out.push((format!("enc.{m}.s{s}.b{b}.c1"), &mut blk.c1));
                    out.push((format!("enc.{m}.s{s}.b{b}.c2"), &mut blk.c2));
                }
            }
        }
        for (s, l) in self.lateral.iter_mut().enumerate() {
            out.push((format!("dec.lateral{s}"), l));
        }
        out.push(("head.conv".into(), &mut self.head));
        out.push(("head.out".into(), &mut self.out));
        out
    }

    pub fn num_params(&self) -> usize {
        self.convs().iter().map(|(_, c)| c.weight.len() + c.bias.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.convs()
            .iter()
            .all(|(_, c)| c.weight.iter().chain(&c.bias).all(|x| x.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let conv = |c: &Conv<T>| c.cast::<U>();
        ModelParams {
            config: self.config.clone(),
            encoders: self
                .encoders
                .iter()
                .map(|e| Encoder {
                    modality: e.modality,
                    stages: e
                        .stages
                        .iter()
                        .map(|s| Stage {
                            down: conv(&s.down),
                            blocks: s
                                .blocks
                                .iter()
                                .map(|b| Block {
                                    c1: conv(&b.c1),
                                    c2: conv(&b.c2),
                                })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
            lateral: self.lateral.iter().map(conv).collect(),
            head: conv(&self.head),
            out: conv(&self.out),
        }
    }
}

/// Deterministic fan-in scaled initialization.
pub fn init_model(config: &ModelConfig, seed: u64) -> Result<ModelParams<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::build(config, |s, gain| Conv::random(s, gain, &mut rng))
}

/// Per-modality input tensors, `N x C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInputs<T = f32> {
    pub tensors: Vec<(Modality, Tensor<T>)>,
}

impl<T: Real> ModelInputs<T> {
    pub fn get(&self, m: Modality) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|(k, _)| *k == m).map(|(_, t)| t)
    }

    pub fn batch_size(&self) -> usize {
        self.tensors.first().map_or(0, |(_, t)| t.n)
    }

    /// Check the modality set, channels and spatial shape against `config`.
    pub fn validate(&self, config: &ModelConfig) -> Result<(usize, usize, usize)> {
        let mut present: Vec<Modality> = self.tensors.iter().map(|(m, _)| *m).collect();
        present.sort();
        if present != config.modalities {
            return Err(Error::Input(format!(
                "inputs provide {present:?}, model expects {:?}",
                config.modalities
            )));
        }
        let (_, first) = &self.tensors[0];
        let (n, h, w) = (first.n, first.h, first.w);
        for (m, t) in &self.tensors {
            if t.c != m.channels() || (t.n, t.h, t.w) != (n, h, w) {
                return Err(Error::Input(format!(
                    "{m} input has shape {:?}, expected [{n}, {}, {h}, {w}]",
                    t.shape(),
                    m.channels()
                )));
            }
        }
        let mult = config.size_multiple();
        if n == 0 || h == 0 || w == 0 || h % mult != 0 || w % mult != 0 {
            return Err(Error::Input(format!(
                "input {h}x{w} (batch {n}) must be non-empty and divisible by {mult}"
            )));
        }
        Ok((n, h, w))
    }
}

/// Inference or training with a seeded dropout mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { dropout_seed: u64 },
}

struct BlockCache<T> {
    x: Tensor<T>,
    h: Tensor<T>,
    y: Tensor<T>,
}

struct StageCache<T> {
    x: Tensor<T>,
    down: Tensor<T>,
    blocks: Vec<BlockCache<T>>,
}

/// Activations kept for the backward pass.
pub struct ForwardCache<T> {
    encoders: Vec<Vec<StageCache<T>>>,
    fused: Vec<Tensor<T>>,
    pyramid_hw: Vec<(usize, usize)>,
    merged: Tensor<T>,
    head: Tensor<T>,
    mask: Option<Vec<T>>,
    dropped: Tensor<T>,
    coarse_hw: (usize, usize),
}

fn stage_output<T>(c: &StageCache<T>) -> &Tensor<T> {
    c.blocks.last().map_or(&c.down, |b| &b.y)
}

fn forward_stage<T: Real>(stage: &Stage<T>, x: Tensor<T>) -> StageCache<T> {
    let down = k::relu(stage.down.forward(&x));
    let mut blocks: Vec<BlockCache<T>> = Vec::with_capacity(stage.blocks.len());
    for b in &stage.blocks {
        let bx = blocks.last().map_or(&down, |c| &c.y).clone();
        let h = k::relu(b.c1.forward(&bx));
        let mut z = b.c2.forward(&h);
        z.add_assign(&bx);
        blocks.push(BlockCache { x: bx, h, y: k::relu(z) });
    }
    StageCache { x, down, blocks }
}

fn resample_to<T: Real>(p: &Tensor<T>, level: usize, target: usize) -> Tensor<T> {
    match level.cmp(&target) {
        std::cmp::Ordering::Less => k::avg_pool(p, 1 << (target - level)),
        std::cmp::Ordering::Equal => p.clone(),
        std::cmp::Ordering::Greater => k::upsample_nearest(p, 1 << (level - target)),
    }
}

/// Forward pass returning the `N x 4 x H x W` map (grip, water, ice, snow) and the cache.
pub fn forward_cached<T: Real>(
    params: &ModelParams<T>,
    inputs: &ModelInputs<T>,
    mode: Mode,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let cfg = &params.config;
    let (_, h, w) = inputs.validate(cfg)?;
    let encoders: Vec<Vec<StageCache<T>>> = params
        .encoders
        .iter()
        .map(|e| {
            let mut x = inputs.get(e.modality).expect("validated").clone();
            e.stages
                .iter()
                .map(|s| {
                    let c = forward_stage(s, x.clone());
                    x = stage_output(&c).clone();
                    c
                })
                .collect()
        })
        .collect();
    let scales = cfg.num_scales;
    let fused: Vec<Tensor<T>> = (0..scales)
        .map(|s| {
            let parts: Vec<&Tensor<T>> = encoders.iter().map(|e| stage_output(&e[s])).collect();
            k::concat(&parts)
        })
        .collect();
    let mut pyramid: Vec<Tensor<T>> = Vec::with_capacity(scales);
    for s in (0..scales).rev() {
        let mut p = params.lateral[s].forward(&fused[s]);
        if let Some(above) = pyramid.last() {
            p.add_assign(&k::upsample_nearest(above, 2));
        }
        pyramid.push(p);
    }
    pyramid.reverse();
    let target = cfg.head_level();
    let mut merged = resample_to(&pyramid[0], 0, target);
    for (s, p) in pyramid.iter().enumerate().skip(1) {
        merged.add_assign(&resample_to(p, s, target));
    }
    let head = k::relu(params.head.forward(&merged));
    let (dropped, mask) = match mode {
        Mode::Train { dropout_seed } if cfg.dropout_final > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
            let mask = k::dropout_mask(head.data.len(), cfg.dropout_final, &mut rng);
            (k::apply_mask(head.clone(), &mask), Some(mask))
        }
        _ => (head.clone(), None),
    };
    let coarse = params.out.forward(&dropped);
    let coarse_hw = (coarse.h, coarse.w);
    let y = k::bilinear_resize(&coarse, h, w);
    let cache = ForwardCache {
        encoders,
        fused,
        pyramid_hw: pyramid.iter().map(|p| (p.h, p.w)).collect(),
        merged,
        head,
        mask,
        dropped,
        coarse_hw,
    };
    Ok((y, cache))
}

pub fn forward<T: Real>(params: &ModelParams<T>, inputs: &ModelInputs<T>, mode: Mode) -> Result<Tensor<T>> {
    forward_cached(params, inputs, mode).map(|(y, _)| y)
}

fn backward_stage<T: Real>(stage: &Stage<T>, cache: &StageCache<T>, dy: Tensor<T>, grad: &mut Stage<T>, need_dx: bool) -> Option<Tensor<T>> {
    let mut g = dy;
    for ((b, c), gb) in stage.blocks.iter().zip(&cache.blocks).zip(grad.blocks.iter_mut()).rev() {
        let dz = k::relu_backward(&c.y, g);
        let dh = b.c2.backward(&c.h, &dz, &mut gb.c2, true).expect("dx requested");
        let dh = k::relu_backward(&c.h, dh);
        let mut dx = b.c1.backward(&c.x, &dh, &mut gb.c1, true).expect("dx requested");
        dx.add_assign(&dz);
        g = dx;
    }
    let dd = k::relu_backward(&cache.down, g);
    stage.down.backward(&cache.x, &dd, &mut grad.down, need_dx)
}

/// Gradients of `sum(dy * forward(params))` with respect to every parameter.
pub fn backward<T: Real>(params: &ModelParams<T>, cache: &ForwardCache<T>, dy: &Tensor<T>) -> ModelParams<T> {
    let cfg = &params.config;
    let mut grad = params.zeros_like();
    let d_coarse = k::bilinear_resize_backward(dy, cache.coarse_hw.0, cache.coarse_hw.1);
    let d_dropped = params
        .out
        .backward(&cache.dropped, &d_coarse, &mut grad.out, true)
        .expect("dx requested");
    let d_head = match &cache.mask {
        Some(mask) => k::apply_mask(d_dropped, mask),
        None => d_dropped,
    };
    let d_head = k::relu_backward(&cache.head, d_head);
    let d_merged = params
        .head
        .backward(&cache.merged, &d_head, &mut grad.head, true)
        .expect("dx requested");

    let target = cfg.head_level();
    let scales = cfg.num_scales;
    let mut d_pyr: Vec<Tensor<T>> = (0..scales)
        .map(|s| {
            let (ph, pw) = cache.pyramid_hw[s];
            match s.cmp(&target) {
                std::cmp::Ordering::Less => k::avg_pool_backward(&d_merged, 1 << (target - s), ph, pw),
                std::cmp::Ordering::Equal => d_merged.clone(),
                std::cmp::Ordering::Greater => k::upsample_nearest_backward(&d_merged, 1 << (s - target)),
            }
        })
        .collect();
    let mut d_fused = Vec::with_capacity(scales);
    for s in 0..scales {
        if s + 1 < scales {
            let up = k::upsample_nearest_backward(&d_pyr[s], 2);
            d_pyr[s + 1].add_assign(&up);
        }
        let df = params.lateral[s]
            .backward(&cache.fused[s], &d_pyr[s], &mut grad.lateral[s], true)
            .expect("dx requested");
        let widths = vec![cfg.encoder_widths[s]; params.encoders.len()];
        d_fused.push(k::split_channels(&df, &widths));
    }
    for (e, (enc, genc)) in params.encoders.iter().zip(grad.encoders.iter_mut()).enumerate() {
        let mut carry: Option<Tensor<T>> = None;
        for s in (0..scales).rev() {
            let mut g = d_fused[s][e].clone();
            if let Some(c) = carry.take() {
                g.add_assign(&c);
            }
            carry = backward_stage(&enc.stages[s], &cache.encoders[e][s], g, &mut genc.stages[s], s > 0);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(mods: &[Modality]) -> ModelConfig {
        ModelConfig {
            modalities: mods.to_vec(),
            encoder_widths: vec![2, 3, 4],
            num_scales: 3,
            blocks_per_stage: 1,
            decoder_width: 3,
            dropout_final: 0.2,
        }
    }

    fn inputs(cfg: &ModelConfig, n: usize, h: usize, w: usize) -> ModelInputs<f32> {
        ModelInputs {
            tensors: cfg
                .modalities
                .iter()
                .map(|&m| {
                    let len = n * m.channels() * h * w;
                    let data = (0..len).map(|i| ((i * 37 % 17) as f32 / 17.0) - 0.4).collect();
                    (m, Tensor::from_vec(n, m.channels(), h, w, data))
                })
                .collect(),
        }
    }

    #[test]
    fn output_has_four_full_resolution_channels() {
        let cfg = tiny_config(&Modality::ALL);
        let p = init_model(&cfg, 1).unwrap();
        let y = forward(&p, &inputs(&cfg, 2, 16, 24), Mode::Eval).unwrap();
        assert_eq!(y.shape(), [2, 4, 16, 24]);
        assert!(y.all_finite());
    }

    #[test]
    fn init_is_deterministic_with_one_encoder_per_modality() {
        let cfg = tiny_config(&Modality::ALL);
        assert_eq!(init_model(&cfg, 5).unwrap(), init_model(&cfg, 5).unwrap());
        assert_ne!(init_model(&cfg, 5).unwrap(), init_model(&cfg, 6).unwrap());
        let p = init_model(&cfg, 5).unwrap();
        let mods: Vec<Modality> = p.encoders.iter().map(|e| e.modality).collect();
        assert_eq!(mods, Modality::ALL.to_vec());
        assert_eq!(p.num_params(), crate::model::count_params(&cfg).unwrap());
    }

    #[test]
    fn fused_channels_concatenate_encoders() {
        let one = init_model(&tiny_config(&[Modality::Rgb]), 0).unwrap();
        let three = init_model(&tiny_config(&Modality::ALL), 0).unwrap();
        for s in 0..3 {
            assert_eq!(one.lateral[s].shape.cin, one.config.encoder_widths[s]);
            assert_eq!(three.lateral[s].shape.cin, 3 * three.config.encoder_widths[s]);
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_dropout_is_seeded() {
        let cfg = tiny_config(&[Modality::Thermal, Modality::Reflectance]);
        let p = init_model(&cfg, 3).unwrap();
        let x = inputs(&cfg, 1, 8, 8);
        assert_eq!(forward(&p, &x, Mode::Eval).unwrap(), forward(&p, &x, Mode::Eval).unwrap());
        let a = forward(&p, &x, Mode::Train { dropout_seed: 9 }).unwrap();
        assert_eq!(a, forward(&p, &x, Mode::Train { dropout_seed: 9 }).unwrap());
        assert_ne!(a, forward(&p, &x, Mode::Train { dropout_seed: 10 }).unwrap());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let cfg = tiny_config(&[Modality::Rgb, Modality::Thermal]);
        let p = init_model(&cfg, 3).unwrap();
        let other = tiny_config(&[Modality::Rgb, Modality::Reflectance]);
        assert!(matches!(forward(&p, &inputs(&other, 1, 8, 8), Mode::Eval), Err(Error::Input(_))));
        assert!(matches!(forward(&p, &inputs(&cfg, 1, 12, 8), Mode::Eval), Err(Error::Input(_))));
    }

    #[test]
    fn backward_matches_finite_differences_in_f64() {
        let cfg = tiny_config(&Modality::ALL);
        let p: ModelParams<f64> = init_model(&cfg, 11).unwrap().cast();
        let x = ModelInputs {
            tensors: inputs(&cfg, 2, 8, 8).tensors.into_iter().map(|(m, t)| (m, t.cast())).collect(),
        };
        let mode = Mode::Train { dropout_seed: 4 };
        let (y, cache) = forward_cached(&p, &x, mode).unwrap();
        let dy: Vec<f64> = (0..y.data.len()).map(|i| ((i * 13 % 7) as f64 - 3.0) / 7.0).collect();
        let objective = |q: &ModelParams<f64>| -> f64 {
            let out = forward(q, &x, mode).unwrap();
            out.data.iter().zip(&dy).map(|(a, b)| a * b).sum()
        };
        let g = backward(&p, &cache, &Tensor::from_vec(y.n, y.c, y.h, y.w, dy.clone()));
        let eps = 1e-6;
        for ((name, gc), idx) in g.convs().into_iter().zip(0..) {
            for j in [0, gc.weight.len() / 2, gc.weight.len() - 1] {
                let mut plus = p.clone();
                plus.convs_mut()[idx].1.weight[j] += eps;
                let mut minus = p.clone();
                minus.convs_mut()[idx].1.weight[j] -= eps;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * eps);
                let an = gc.weight[j];
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "{name}[{j}]: fd {fd} vs analytic {an}");
            }
        }
    }
}
