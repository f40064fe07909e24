use serde::{Deserialize, Serialize};

use crate::model::{ModelParams, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected first and second moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Real = f32> {
    pub config: AdamConfig,
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub steps: u64,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ModelParams<T>, config: AdamConfig) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64) {
        self.steps += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.steps as i32;
        let step = lr / (1.0 - beta1.powi(t));
        let v_corr = 1.0 / (1.0 - beta2.powi(t));
        let (b1, b2, eps, step, v_corr) = (T::of(beta1), T::of(beta2), T::of(eps), T::of(step), T::of(v_corr));
        let one = T::one();
        let convs = params.convs_mut();
        let moments = self.m.convs_mut().into_iter().zip(self.v.convs_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in convs.into_iter().zip(grads.convs()).zip(moments) {
            let slots = [
                (&mut p.weight, &g.weight, &mut m.weight, &mut v.weight),
                (&mut p.bias, &g.bias, &mut m.bias, &mut v.bias),
            ];
            for (p, g, m, v) in slots {
                for (((p, &g), m), v) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = b1 * *m + (one - b1) * g;
                    *v = b2 * *v + (one - b2) * g * g;
                    *p = *p - step * *m / ((*v * v_corr).sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, Modality, ModelConfig};

    fn params() -> ModelParams<f64> {
        let cfg = ModelConfig {
            modalities: vec![Modality::Thermal],
            encoder_widths: vec![2, 3],
            num_scales: 2,
            blocks_per_stage: 1,
            decoder_width: 3,
            dropout_final: 0.0,
        };
        init_model(&cfg, 5).unwrap().cast()
    }

    #[test]
    fn zero_learning_rate_is_a_null_update() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        for (_, c) in g.convs_mut() {
            c.weight.iter_mut().for_each(|x| *x = 0.3);
        }
        let mut adam = Adam::new(&p, AdamConfig::default());
        for _ in 0..5 {
            adam.step(&mut p, &g, 0.0);
        }
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_parameter_by_lr_against_the_gradient_sign() {
        let mut p = params();
        let before = p.clone();
        let mut g = p.zeros_like();
        for (_, c) in g.convs_mut() {
            for (i, x) in c.weight.iter_mut().enumerate() {
                *x = if i % 2 == 0 { 2.0 } else { -0.5 };
            }
        }
        let mut adam = Adam::new(&p, AdamConfig::default());
        adam.step(&mut p, &g, 1e-3);
        for ((_, a), (_, b)) in p.convs().into_iter().zip(before.convs()) {
            for (i, (x, y)) in a.weight.iter().zip(&b.weight).enumerate() {
                let expected = if i % 2 == 0 { -1e-3 } else { 1e-3 };
                assert!((x - y - expected).abs() < 1e-9);
            }
            assert_eq!(a.bias, b.bias);
        }
    }
}
