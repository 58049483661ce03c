use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::grad::{loss_and_grad_into, sgd_step, Backprop};
use super::model::{AttentionClassifier, Parameters};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::schema::{EncodedSample, FeatureSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            embed_dim: 32,
            hidden_dim: 64,
            learning_rate: 0.05,
            epochs: 30,
            batch_size: 128,
            seed: 0,
            init_scale: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        TrainConfig {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("widths, epochs and batch size must be >= 1".into()));
        }
        if !positive(self.learning_rate) || !positive(self.init_scale) {
            return Err(Error::Config("learning rate and init scale must be positive".into()));
        }
        Ok(())
    }
}

/// Train with mini-batch SGD. Initialization and the per-epoch shuffle come
/// from separate streams of `config.seed`; training uses no mask.
pub fn train(
    schema: &FeatureSchema,
    samples: &[EncodedSample],
    config: &TrainConfig,
) -> Result<AttentionClassifier> {
    train_with_history(schema, samples, config).map(|(model, _)| model)
}

/// Like [`train`], also returning the mean batch loss of every epoch.
pub fn train_with_history(
    schema: &FeatureSchema,
    samples: &[EncodedSample],
    config: &TrainConfig,
) -> Result<(AttentionClassifier, Vec<f64>)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    for s in samples {
        schema.check_sample(s)?;
    }

    let mut model = AttentionClassifier::zeros(schema.clone(), config.embed_dim, config.hidden_dim)?;
    let mut init = rng::stream(config.seed, Stream::Init);
    let scale = config.init_scale;
    for t in model.params.tensors_mut() {
        for v in t.iter_mut() {
            *v = init.random_range(-scale..scale);
        }
    }

    let mut shuffle = rng::stream(config.seed, Stream::Shuffle);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut batch = Vec::with_capacity(config.batch_size);
    let mut grads = Parameters::zeros(schema.total_entities(), config.embed_dim, config.hidden_dim);
    let mut scratch = Backprop::new(&model);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle);
        let mut epoch_loss = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| samples[i].clone()));
            let loss = loss_and_grad_into(&model, &batch, None, &mut scratch, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            sgd_step(&mut model, &grads, config.learning_rate)?;
            epoch_loss += loss;
            n_batches += 1;
        }
        if !model.params.all_finite() {
            return Err(Error::Divergence { epoch });
        }
        history.push(epoch_loss / n_batches as f64);
    }
    Ok((model, history))
}
