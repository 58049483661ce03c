//! Helpers shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

use fairattn::datasets::Cell;
use fairattn::nn::{AttentionClassifier, AttentionMask};
use fairattn::schema::{EncodedSample, FeatureKind, FeatureSchema, FeatureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward re-implementation of the forward pass, written without
/// reusing any of the crate's numerics.
pub fn reference_prob(model: &AttentionClassifier, s: &EncodedSample, mask: &[f64]) -> f64 {
    let d = model.embed_dim;
    let p = &model.params;
    let cols: Vec<Vec<f64>> = s
        .entity_ids
        .iter()
        .map(|&id| p.embed[id * d..(id + 1) * d].to_vec())
        .collect();
    let scores: Vec<f64> = cols
        .iter()
        .map(|e| (0..d).map(|c| p.query[c] * e[c].tanh()).sum())
        .collect();
    let z: f64 = scores.iter().map(|s| s.exp()).sum();
    let alpha: Vec<f64> = scores
        .iter()
        .zip(mask)
        .map(|(s, m)| s.exp() / z * m)
        .collect();
    let r: Vec<f64> = (0..d)
        .map(|c| cols.iter().zip(&alpha).map(|(e, a)| a * e[c]).sum::<f64>().tanh())
        .collect();
    let mut logit = p.b2;
    for j in 0..model.hidden_dim {
        let z1: f64 = p.b1[j] + (0..d).map(|c| p.w1[j * d + c] * r[c]).sum::<f64>();
        logit += p.w2[j] * z1.max(0.0);
    }
    1.0 / (1.0 + (-logit).exp())
}

/// Mean unclamped binary cross-entropy under the reference forward pass.
pub fn reference_loss(model: &AttentionClassifier, batch: &[EncodedSample], mask: &[f64]) -> f64 {
    batch
        .iter()
        .map(|s| {
            let p = reference_prob(model, s, mask);
            if s.label == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / batch.len() as f64
}

/// Pre-activation of every hidden unit for every sample, used to stay away
/// from the ReLU kink when differencing.
pub fn hidden_pre(model: &AttentionClassifier, batch: &[EncodedSample], mask: &[f64]) -> Vec<f64> {
    let m = AttentionMask::new(mask.to_vec()).unwrap();
    batch
        .iter()
        .flat_map(|s| model.forward(s, Some(&m)).hidden_pre)
        .collect()
}

pub struct GradInstance {
    pub model: AttentionClassifier,
    pub batch: Vec<EncodedSample>,
    pub mask: Vec<f64>,
}

/// Random small model, batch and mask. `d_e <= 4`, `m <= 5`, `h <= 6`.
pub fn random_instance(rng: &mut ChaCha8Rng) -> GradInstance {
    loop {
        let m = rng.random_range(1..=5);
        let sensitive = rng.random_range(0..m);
        let features = (0..m)
            .map(|k| FeatureSpec {
                name: format!("x{k}"),
                kind: if rng.random_bool(0.5) {
                    FeatureKind::Categorical {
                        cardinality: rng.random_range(2..=3),
                    }
                } else {
                    FeatureKind::Continuous {
                        bins: rng.random_range(2..=4),
                    }
                },
                is_sensitive: k == sensitive,
            })
            .collect();
        let schema = FeatureSchema::new(features).unwrap();
        let d_e = rng.random_range(1..=4);
        let h = rng.random_range(1..=6);
        let offsets = schema.offsets();
        let blocks: Vec<usize> = schema.features.iter().map(|f| f.block_size()).collect();
        let mut model = AttentionClassifier::zeros(schema, d_e, h).unwrap();
        for t in model.params.tensors_mut() {
            for v in t.iter_mut() {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let n = rng.random_range(1..=4);
        let batch: Vec<EncodedSample> = (0..n)
            .map(|_| EncodedSample {
                entity_ids: (0..m).map(|k| offsets[k] + rng.random_range(0..blocks[k])).collect(),
                label: rng.random_range(0..=1),
                group: 0,
            })
            .collect();
        let mask: Vec<f64> = (0..m)
            .map(|_| match rng.random_range(0..4) {
                0 => 0.0,
                1 => rng.random_range(0.0..1.0),
                _ => 1.0,
            })
            .collect();
        // resample instances sitting near a ReLU kink
        if hidden_pre(&model, &batch, &mask).iter().all(|z| z.abs() > 1e-3) {
            return GradInstance { model, batch, mask };
        }
    }
}

pub fn instance_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Largest relative error between the analytic gradient and central finite
/// differences of the reference loss. The denominator is floored at 1e-8 only
/// to avoid dividing zero by zero.
pub fn max_grad_error(inst: &GradInstance, eps: f64) -> f64 {
    let mask = AttentionMask::new(inst.mask.clone()).unwrap();
    let (_, grads) = fairattn::nn::loss_and_grad(&inst.model, &inst.batch, Some(&mask)).unwrap();
    let mut model = inst.model.clone();
    let mut worst: f64 = 0.0;
    for (ti, g) in grads.tensors().iter().enumerate() {
        for i in 0..g.len() {
            let orig = model.params.tensors()[ti][i];
            model.params.tensors_mut()[ti][i] = orig + eps;
            let up = reference_loss(&model, &inst.batch, &inst.mask);
            model.params.tensors_mut()[ti][i] = orig - eps;
            let down = reference_loss(&model, &inst.batch, &inst.mask);
            model.params.tensors_mut()[ti][i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let err = (g[i] - numeric).abs() / g[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(err);
        }
    }
    worst
}

/// Naive pairwise oracle: rate of ŷ = 1 per group among samples whose label
/// passes `keep`, then the largest absolute difference over every ordered pair
/// of groups that both have samples.
pub fn brute_force(y_hat: &[u8], y: &[u8], a: &[usize], l: usize, keep: &dyn Fn(u8) -> bool) -> Option<f64> {
    let rate = |g: usize| -> Option<f64> {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| a[i] == g && keep(y[i])).collect();
        if idx.is_empty() {
            return None;
        }
        let pos = idx.iter().filter(|&&i| y_hat[i] == 1).count();
        Some(pos as f64 / idx.len() as f64)
    };
    let mut best: Option<f64> = None;
    for i in 0..l {
        for j in 0..l {
            if let (Some(ri), Some(rj)) = (rate(i), rate(j)) {
                let gap = (ri - rj).abs();
                best = Some(best.map_or(gap, |b: f64| b.max(gap)));
            }
        }
    }
    // a single populated group yields only the self-pair
    let populated = (0..l).filter(|&g| rate(g).is_some()).count();
    if populated < 2 {
        None
    } else {
        best
    }
}

pub fn fraction(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

pub fn bit(cell: &Cell) -> u8 {
    match cell {
        Cell::Cat(s) if s == "1" => 1,
        Cell::Cat(s) if s == "0" => 0,
        other => panic!("unexpected cell {other:?}"),
    }
}

pub fn num(cell: &Cell) -> f64 {
    match cell {
        Cell::Num(v) => *v,
        other => panic!("unexpected cell {other:?}"),
    }
}

pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
