//! Independent reference computations shared by property tests and the acceptance suite.

use std::collections::BTreeMap;

use gripmap::evaluation::{weighted_frame_rmse, FrameResiduals};
use gripmap::pipeline::{
    compute_weights, geofence_split, raw_weight, Geofence, SparseLabel, SplitConfig, SplitRole, WeightMode,
};
use gripmap::training::loss_and_grad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Double loop over frames and labels: `sqrt(mean_f (sum_i w r^2 / sum_i w))`.
pub fn brute_force_rmse(frames: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (res, w) in frames {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..res.len() {
            num += w[i] * res[i] * res[i];
            den += w[i];
        }
        if den > 0.0 {
            sum += num / den;
            count += 1;
        }
    }
    (sum / count as f64).sqrt()
}

pub fn random_eval_set(rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>)> {
    (0..rng.random_range(1..30))
        .map(|_| {
            let n = rng.random_range(0..60);
            let res = (0..n).map(|_| rng.random_range(-0.8..0.8)).collect();
            let w = (0..n).map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.0..3.0) }).collect();
            (res, w)
        })
        .collect()
}

/// Largest relative difference between the metric and the brute-force reference.
pub fn rmse_oracle_max_rel_error(sets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < sets {
        let set = random_eval_set(&mut rng);
        let want = brute_force_rmse(&set);
        if !want.is_finite() {
            continue;
        }
        let frames: Vec<FrameResiduals> = set
            .iter()
            .map(|(r, w)| FrameResiduals {
                residuals: r.clone(),
                weights: w.clone(),
            })
            .collect();
        let got = weighted_frame_rmse(&frames).unwrap().rmse;
        worst = worst.max(((got - want) / want).abs());
        done += 1;
    }
    worst
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, w: usize, h: usize) -> Vec<SparseLabel> {
    (0..n)
        .map(|_| SparseLabel {
            u: rng.random_range(0..w),
            v: rng.random_range(0..h),
            grip: rng.random_range(0.1..0.82),
            d_water: rng.random_range(0.0..3.0),
            d_ice: rng.random_range(0.0..1.0),
            d_snow: rng.random_range(0.0..5.0),
            weight_raw: rng.random_range(0.0..1.0),
        })
        .collect()
}

/// Largest relative error of the analytic prediction gradient against central differences.
///
/// Each instance has a random dense 4-channel prediction map and random labels; pixels may
/// carry several labels. Relative error is `|a - n| / max(|a|, |n|, 1e-3)`.
pub fn loss_gradient_max_rel_error(instances: usize, seed: u64, h: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (w, hgt) = (rng.random_range(2..8), rng.random_range(2..8));
        let n = rng.random_range(1..12);
        let labels = random_labels(&mut rng, n, w, hgt);
        let weights: Vec<f64> = labels.iter().map(|l| l.weight_raw * 2.0).collect();
        let lambda = rng.random_range(0.0..2.0);
        let mut map: Vec<[f64; 4]> = (0..w * hgt)
            .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..3.0)))
            .collect();
        let eval = |m: &[[f64; 4]]| {
            gripmap::training::loss(|u, v| m[v * w + u], &labels, &weights, lambda).unwrap()
        };
        let (_, grads) = loss_and_grad(|u, v| map[v * w + u], &labels, &weights, lambda).unwrap();
        let mut analytic = vec![[0.0; 4]; w * hgt];
        for (u, v, g) in grads {
            for c in 0..4 {
                analytic[v * w + u][c] += g[c];
            }
        }
        for p in 0..w * hgt {
            for c in 0..4 {
                let x = map[p][c];
                map[p][c] = x + h;
                let up = eval(&map);
                map[p][c] = x - h;
                let down = eval(&map);
                map[p][c] = x;
                let numeric = (up - down) / (2.0 * h);
                let a = analytic[p][c];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3));
            }
        }
    }
    worst
}

/// Violations of the weighting invariants over randomized frames: eval weights mean one,
/// zero raw weight at the horizon row, raw weight non-decreasing in the row index.
pub fn weight_invariant_violations(frames: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..frames {
        let height = rng.random_range(8..600);
        let horizon = rng.random_range(0.0..(height as f64 - 1.0));
        bad += usize::from(raw_weight(horizon, horizon, height) != 0.0);
        let mut prev = -1.0;
        for v in 0..height {
            let r = raw_weight(v as f64, horizon, height);
            bad += usize::from(r < prev || !(0.0..=1.0).contains(&r));
            prev = r;
        }
        let n = rng.random_range(1..200);
        let rows: Vec<f64> = (0..n).map(|_| rng.random_range(0..height) as f64).collect();
        match compute_weights(&rows, horizon, height, WeightMode::Eval) {
            Ok(ws) => {
                let mean = ws.iter().sum::<f64>() / ws.len() as f64;
                bad += usize::from((mean - 1.0).abs() > 1e-12);
            }
            // Only frames whose labels all sit on or above the horizon may fail.
            Err(_) => bad += usize::from(rows.iter().any(|&v| v > horizon)),
        }
    }
    bad
}

/// Violations of the geofence invariants for `n` random positions: the split is total,
/// val/test samples lie inside a fence of their role, train samples keep `radius + buffer`
/// from every center.
pub fn split_invariant_violations(n: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = SplitConfig::default();
    let fences: Vec<Geofence> = (0..8)
        .map(|i| Geofence {
            center: [1000.0 * i as f64, rng.random_range(-300.0..300.0)],
            role: if i % 2 == 0 { SplitRole::Val } else { SplitRole::Test },
        })
        .collect();
    let positions: BTreeMap<String, [f64; 2]> = (0..n)
        .map(|i| (format!("s{i:05}"), [rng.random_range(-500.0..7500.0), rng.random_range(-800.0..800.0)]))
        .collect();
    let split = geofence_split(&positions, &fences, &cfg).unwrap();
    let mut bad = usize::from(split.len() != positions.len());
    for (id, p) in &positions {
        let Some(&role) = split.get(id) else {
            bad += 1;
            continue;
        };
        let d = |f: &Geofence| (p[0] - f.center[0]).hypot(p[1] - f.center[1]);
        bad += usize::from(match role {
            SplitRole::Val | SplitRole::Test => !fences.iter().any(|f| f.role == role && d(f) <= cfg.radius),
            SplitRole::Train => fences.iter().any(|f| d(f) < cfg.radius + cfg.buffer),
            SplitRole::Excluded => fences.iter().any(|f| d(f) <= cfg.radius) || fences.iter().all(|f| d(f) >= cfg.radius + cfg.buffer),
        });
    }
    bad
}

/// Sample of size `h x w` with random images and `n_labels` random labels.
pub fn random_sample(rng: &mut ChaCha8Rng, h: usize, w: usize, n_labels: usize) -> gripmap::pipeline::Sample {
    use ndarray::{Array2, Array3};
    let mut labels = random_labels(rng, n_labels, w, h);
    labels[0].weight_raw = 1.0;
    gripmap::pipeline::Sample {
        id: "random".into(),
        frame_time: 0.0,
        position: [0.0; 2],
        rgb: Array3::from_shape_fn((h, w, 3), |_| rng.random_range(0.0..1.0)),
        thermal: Array2::from_shape_fn((h, w), |_| rng.random_range(-2.0..2.0)),
        reflectance: Array2::from_shape_fn((h, w), |_| rng.random_range(0.0..1.0)),
        reflectance_valid: Array2::from_shape_fn((h, w), |_| rng.random_bool(0.8)),
        road_mask: Array2::from_elem((h, w), true),
        labels,
    }
}

/// Largest relative error between the backward pass and central differences of the
/// training loss, over a few weights and biases of every convolution of the model.
///
/// Runs in float64 with a fixed dropout mask. Relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn model_gradient_max_rel_error(config: &gripmap::model::ModelConfig, size: usize, seed: u64) -> f64 {
    use gripmap::model::{backward, batch_inputs, forward, forward_cached, init_model, Mode, ModelInputs, ModelParams};
    use gripmap::training::batch_loss_and_grad;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = [random_sample(&mut rng, size, size, 12), random_sample(&mut rng, size, size, 7)];
    let refs: Vec<&gripmap::pipeline::Sample> = samples.iter().collect();
    let x32 = batch_inputs(&refs, &config.modalities).unwrap();
    let x = ModelInputs {
        tensors: x32.tensors.iter().map(|(m, t)| (*m, t.cast::<f64>())).collect(),
    };
    let labels: Vec<&[SparseLabel]> = samples.iter().map(|s| s.labels.as_slice()).collect();
    let mut p: ModelParams<f64> = init_model(config, seed).unwrap().cast();
    // Nonzero biases move pre-activations off the ReLU kink at zero.
    for (_, c) in p.convs_mut() {
        for (i, b) in c.bias.iter_mut().enumerate() {
            *b = 0.05 * ((i * 7 % 5) as f64 - 2.0);
        }
    }
    let mode = Mode::Train { dropout_seed: seed };
    let objective = |q: &ModelParams<f64>| {
        let y = forward(q, &x, mode).unwrap();
        batch_loss_and_grad(&y, &labels, 1.0).unwrap().0
    };
    let (y, cache) = forward_cached(&p, &x, mode).unwrap();
    let (_, dy, _) = batch_loss_and_grad(&y, &labels, 1.0).unwrap();
    let grads = backward(&p, &cache, &dy);
    let eps = 1e-6;
    let mut worst = 0.0f64;
    let names: Vec<usize> = (0..grads.convs().len()).collect();
    for idx in names {
        let (wlen, blen) = {
            let g = &grads.convs()[idx].1;
            (g.weight.len(), g.bias.len())
        };
        let mut picks = Vec::new();
        for k in 0..6 {
            picks.push(if k < 4 { (false, rng.random_range(0..wlen)) } else { (true, rng.random_range(0..blen)) });
        }
        for (is_bias, j) in picks {
            let analytic = {
                let g = &grads.convs()[idx].1;
                if is_bias { g.bias[j] } else { g.weight[j] }
            };
            let bump = |p: &mut ModelParams<f64>, delta: f64| {
                let mut convs = p.convs_mut();
                let c = &mut convs[idx].1;
                if is_bias { c.bias[j] += delta } else { c.weight[j] += delta }
            };
            bump(&mut p, eps);
            let up = objective(&p);
            bump(&mut p, -2.0 * eps);
            let down = objective(&p);
            bump(&mut p, eps);
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6));
        }
    }
    worst
}
