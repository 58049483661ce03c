//! Binary cross-entropy loss and its exact gradient, derived by hand through
//! the dense layers, tanh pooling, masked softmax attention and the embedding
//! gather.

use super::model::{AttentionClassifier, AttentionMask, ForwardTrace, Parameters};
use crate::error::{Error, Result};
use crate::schema::EncodedSample;

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` inside the log.
pub const PROB_CLAMP: f64 = 1e-12;

fn bce(prob: f64, label: u8) -> f64 {
    let p = prob.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Per-sample scratch for the backward pass.
pub(crate) struct Backprop {
    trace: ForwardTrace,
    d_hidden: Vec<f64>,
    d_repr: Vec<f64>,
    d_pooled: Vec<f64>,
    d_attention: Vec<f64>,
    d_embed: Vec<f64>,
}

impl Backprop {
    pub(crate) fn new(model: &AttentionClassifier) -> Self {
        let (m, d, h) = (model.n_features(), model.embed_dim, model.hidden_dim);
        Backprop {
            trace: ForwardTrace::empty(m, d, h),
            d_hidden: vec![0.0; h],
            d_repr: vec![0.0; d],
            d_pooled: vec![0.0; d],
            d_attention: vec![0.0; m],
            d_embed: vec![0.0; m * d],
        }
    }

    /// Forward one sample, then add `scale * ∂loss/∂θ` into `grads`.
    /// Returns the sample's unscaled loss.
    pub(crate) fn accumulate(
        &mut self,
        model: &AttentionClassifier,
        sample: &EncodedSample,
        mask: Option<&AttentionMask>,
        scale: f64,
        grads: &mut Parameters,
    ) -> f64 {
        let (m, d) = (model.n_features(), model.embed_dim);
        let p = &model.params;
        model.forward_into(sample, mask, &mut self.trace);
        let t = &self.trace;
        let loss = bce(t.prob, sample.label);

        // ∂bce/∂logit of the unclamped loss
        let g = scale * (t.prob - f64::from(sample.label));

        grads.b2 += g;
        for j in 0..model.hidden_dim {
            grads.w2[j] += g * t.hidden[j];
            self.d_hidden[j] = if t.hidden_pre[j] > 0.0 { g * p.w2[j] } else { 0.0 };
        }

        self.d_repr.fill(0.0);
        for j in 0..model.hidden_dim {
            let dz = self.d_hidden[j];
            if dz == 0.0 {
                continue;
            }
            grads.b1[j] += dz;
            let row = j * d..(j + 1) * d;
            for ((gw, &w), (&r, dr)) in grads.w1[row.clone()]
                .iter_mut()
                .zip(&p.w1[row])
                .zip(t.representation.iter().zip(self.d_repr.iter_mut()))
            {
                *gw += dz * r;
                *dr += dz * w;
            }
        }
        for c in 0..d {
            let r = t.representation[c];
            self.d_pooled[c] = self.d_repr[c] * (1.0 - r * r);
        }

        // pooled = Σ_k α'_k e_k, with α'_k = mask_k α_k
        let mut weighted = 0.0;
        for k in 0..m {
            let col = k * d..(k + 1) * d;
            let d_masked = super::model::dot(&self.d_pooled, &t.embeddings[col.clone()]);
            let mult = mask.map_or(1.0, |mk| mk.multipliers()[k]);
            self.d_attention[k] = d_masked * mult;
            weighted += t.attention_raw[k] * self.d_attention[k];
            let a = t.attention[k];
            for (de, &dp) in self.d_embed[col].iter_mut().zip(&self.d_pooled) {
                *de = a * dp;
            }
        }

        // softmax, then scores s_k = w · tanh(e_k)
        for k in 0..m {
            let ds = t.attention_raw[k] * (self.d_attention[k] - weighted);
            if ds == 0.0 {
                continue;
            }
            let col = k * d..(k + 1) * d;
            for (c, (&h, de)) in t.activated[col.clone()]
                .iter()
                .zip(self.d_embed[col].iter_mut())
                .enumerate()
            {
                grads.query[c] += ds * h;
                *de += ds * p.query[c] * (1.0 - h * h);
            }
        }

        for (k, &id) in sample.entity_ids.iter().enumerate() {
            let row = &mut grads.embed[id * d..(id + 1) * d];
            for (g, &de) in row.iter_mut().zip(&self.d_embed[k * d..(k + 1) * d]) {
                *g += de;
            }
        }
        loss
    }
}

/// Mean binary cross-entropy over `batch` and its gradient for every
/// parameter. Only embedding rows gathered by the batch receive gradient.
pub fn loss_and_grad(
    model: &AttentionClassifier,
    batch: &[EncodedSample],
    mask: Option<&AttentionMask>,
) -> Result<(f64, Parameters)> {
    let mut grads = Parameters::zeros(model.schema.total_entities(), model.embed_dim, model.hidden_dim);
    let loss = loss_and_grad_into(model, batch, mask, &mut Backprop::new(model), &mut grads)?;
    Ok((loss, grads))
}

pub(crate) fn loss_and_grad_into(
    model: &AttentionClassifier,
    batch: &[EncodedSample],
    mask: Option<&AttentionMask>,
    scratch: &mut Backprop,
    grads: &mut Parameters,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    if let Some(mask) = mask {
        if mask.len() != model.n_features() {
            return Err(Error::Shape(format!(
                "mask has {} entries, model has {} features",
                mask.len(),
                model.n_features()
            )));
        }
    }
    grads.fill(0.0);
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for s in batch {
        total += scratch.accumulate(model, s, mask, scale, grads);
    }
    Ok(total * scale)
}

/// `θ ← θ − lr·∇θ` for every parameter.
pub fn sgd_step(model: &mut AttentionClassifier, grads: &Parameters, learning_rate: f64) -> Result<()> {
    if !model.params.same_shape(grads) {
        return Err(Error::Shape("gradient shapes do not match the model".into()));
    }
    for (theta, g) in model.params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (t, &gv) in theta.iter_mut().zip(g) {
            *t -= learning_rate * gv;
        }
    }
    Ok(())
}
