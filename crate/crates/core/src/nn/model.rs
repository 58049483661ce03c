use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{EncodedSample, FeatureSchema};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// All learnable arrays. Matrices are row-major: `embed` is
/// `n_entities × embed_dim`, `w1` is `hidden_dim × embed_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub embed: Vec<f64>,
    pub query: Vec<f64>,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Parameters {
    pub fn zeros(n_entities: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        Parameters {
            embed: vec![0.0; n_entities * embed_dim],
            query: vec![0.0; embed_dim],
            w1: vec![0.0; hidden_dim * embed_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    pub const NAMES: [&'static str; 6] = ["embed", "query", "w1", "b1", "w2", "b2"];

    pub fn tensors(&self) -> [&[f64]; 6] {
        [
            &self.embed,
            &self.query,
            &self.w1,
            &self.b1,
            &self.w2,
            std::slice::from_ref(&self.b2),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.embed,
            &mut self.query,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            std::slice::from_mut(&mut self.b2),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &Parameters) -> bool {
        self.tensors()
            .iter()
            .zip(other.tensors().iter())
            .all(|(a, b)| a.len() == b.len())
    }

    pub fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionClassifier {
    pub schema: FeatureSchema,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub params: Parameters,
}

/// Per-feature multipliers applied to the softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMask {
    multipliers: Vec<f64>,
}

impl AttentionMask {
    pub fn new(multipliers: Vec<f64>) -> Result<Self> {
        if let Some(bad) = multipliers.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Config(format!("mask multiplier {bad} outside [0, 1]")));
        }
        Ok(AttentionMask { multipliers })
    }

    pub fn ones(m: usize) -> Self {
        AttentionMask {
            multipliers: vec![1.0; m],
        }
    }

    /// All ones except feature `k`, which is zeroed.
    pub fn zero_feature(m: usize, k: usize) -> Self {
        let mut mask = Self::ones(m);
        mask.multipliers[k] = 0.0;
        mask
    }

    /// Multiply every feature in `features` by `decay`.
    pub fn decay(m: usize, features: &[usize], decay: f64) -> Result<Self> {
        let mut mult = vec![1.0; m];
        for &k in features {
            *mult
                .get_mut(k)
                .ok_or_else(|| Error::Shape(format!("feature index {k} >= {m}")))? = decay;
        }
        Self::new(mult)
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }

    pub fn len(&self) -> usize {
        self.multipliers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.multipliers.is_empty()
    }
}

/// Intermediate values of one forward pass. Per-feature matrices are stored
/// feature-major: column `k` of `E` is `embeddings[k*d_e..(k+1)*d_e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub embeddings: Vec<f64>,
    pub activated: Vec<f64>,
    pub scores: Vec<f64>,
    /// softmax output before the mask
    pub attention_raw: Vec<f64>,
    /// attention after the mask; this is α'
    pub attention: Vec<f64>,
    pub pooled: Vec<f64>,
    pub representation: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
    pub prob: f64,
}

impl ForwardTrace {
    pub(crate) fn empty(m: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        ForwardTrace {
            embeddings: vec![0.0; m * embed_dim],
            activated: vec![0.0; m * embed_dim],
            scores: vec![0.0; m],
            attention_raw: vec![0.0; m],
            attention: vec![0.0; m],
            pooled: vec![0.0; embed_dim],
            representation: vec![0.0; embed_dim],
            hidden_pre: vec![0.0; hidden_dim],
            hidden: vec![0.0; hidden_dim],
            logit: 0.0,
            prob: 0.5,
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl AttentionClassifier {
    pub fn zeros(schema: FeatureSchema, embed_dim: usize, hidden_dim: usize) -> Result<Self> {
        schema.validate()?;
        if embed_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("embedding and hidden widths must be >= 1".into()));
        }
        let params = Parameters::zeros(schema.total_entities(), embed_dim, hidden_dim);
        Ok(AttentionClassifier {
            schema,
            embed_dim,
            hidden_dim,
            params,
        })
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let expect = Parameters::zeros(self.schema.total_entities(), self.embed_dim, self.hidden_dim);
        if self.embed_dim == 0 || self.hidden_dim == 0 || !self.params.same_shape(&expect) {
            return Err(Error::Shape("parameter shapes inconsistent with schema and widths".into()));
        }
        if !self.params.all_finite() {
            return Err(Error::Shape("non-finite parameter".into()));
        }
        Ok(())
    }

    /// Embedding row of entity `id`.
    pub fn embedding(&self, id: usize) -> &[f64] {
        &self.params.embed[id * self.embed_dim..(id + 1) * self.embed_dim]
    }

    pub fn embedding_mut(&mut self, id: usize) -> &mut [f64] {
        let d = self.embed_dim;
        &mut self.params.embed[id * d..(id + 1) * d]
    }

    pub fn forward(&self, sample: &EncodedSample, mask: Option<&AttentionMask>) -> ForwardTrace {
        let mut trace = ForwardTrace::empty(self.n_features(), self.embed_dim, self.hidden_dim);
        self.forward_into(sample, mask, &mut trace);
        trace
    }

    /// Forward pass writing into a reusable trace. Panics if the sample or mask
    /// length does not match the schema.
    pub fn forward_into(
        &self,
        sample: &EncodedSample,
        mask: Option<&AttentionMask>,
        t: &mut ForwardTrace,
    ) {
        let m = self.n_features();
        let d = self.embed_dim;
        assert_eq!(sample.entity_ids.len(), m, "sample length");
        if let Some(mask) = mask {
            assert_eq!(mask.len(), m, "mask length");
        }
        let p = &self.params;

        for (k, &id) in sample.entity_ids.iter().enumerate() {
            let e = self.embedding(id);
            let col = k * d..(k + 1) * d;
            t.embeddings[col.clone()].copy_from_slice(e);
            let mut score = 0.0;
            for (c, (h, &ev)) in t.activated[col].iter_mut().zip(e).enumerate() {
                *h = ev.tanh();
                score += p.query[c] * *h;
            }
            t.scores[k] = score;
        }

        let max = t.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (a, &s) in t.attention_raw.iter_mut().zip(&t.scores) {
            *a = (s - max).exp();
            total += *a;
        }
        for a in t.attention_raw.iter_mut() {
            *a /= total;
        }
        for k in 0..m {
            let mult = mask.map_or(1.0, |mk| mk.multipliers[k]);
            t.attention[k] = t.attention_raw[k] * mult;
        }

        t.pooled.fill(0.0);
        for k in 0..m {
            let a = t.attention[k];
            for (u, &e) in t.pooled.iter_mut().zip(&t.embeddings[k * d..(k + 1) * d]) {
                *u += a * e;
            }
        }
        for (r, &u) in t.representation.iter_mut().zip(&t.pooled) {
            *r = u.tanh();
        }

        let mut logit = p.b2;
        for j in 0..self.hidden_dim {
            let row = &p.w1[j * d..(j + 1) * d];
            let z = p.b1[j] + dot(row, &t.representation);
            t.hidden_pre[j] = z;
            t.hidden[j] = z.max(0.0);
            logit += p.w2[j] * t.hidden[j];
        }
        t.logit = logit;
        t.prob = logistic(logit);
    }

    pub fn prob(&self, sample: &EncodedSample, mask: Option<&AttentionMask>) -> f64 {
        self.forward(sample, mask).prob
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Binary predictions `prob >= threshold`. With no mask (or the all-ones mask)
/// these are the original model's outcomes.
pub fn predict(
    model: &AttentionClassifier,
    samples: &[EncodedSample],
    mask: Option<&AttentionMask>,
    threshold: f64,
) -> Vec<u8> {
    let mut trace = ForwardTrace::empty(model.n_features(), model.embed_dim, model.hidden_dim);
    samples
        .iter()
        .map(|s| {
            model.forward_into(s, mask, &mut trace);
            u8::from(trace.prob >= threshold)
        })
        .collect()
}
