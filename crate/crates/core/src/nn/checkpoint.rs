//! JSON checkpoint: schema hash, training config, fitted encoder and every
//! parameter array with its shape. Floats are written in shortest round-trip
//! form, so save → load reproduces the parameters bit for bit.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{AttentionClassifier, Parameters};
use super::train::TrainConfig;
use crate::error::{Error, Result};
use crate::schema::Encoder;

pub const CHECKPOINT_FORMAT: &str = "fairattn-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub schema_hash: String,
    pub config: TrainConfig,
    pub encoder: Encoder,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub arrays: Vec<NamedArray>,
}

impl Checkpoint {
    pub fn new(model: &AttentionClassifier, encoder: &Encoder, config: &TrainConfig) -> Result<Self> {
        if encoder.schema != model.schema {
            return Err(Error::Schema("encoder schema differs from model schema".into()));
        }
        let (n, d, h) = (model.schema.total_entities(), model.embed_dim, model.hidden_dim);
        let shapes = [vec![n, d], vec![d], vec![h, d], vec![h], vec![h], vec![]];
        let arrays = Parameters::NAMES
            .iter()
            .zip(shapes)
            .zip(model.params.tensors())
            .map(|((name, shape), data)| NamedArray {
                name: (*name).to_owned(),
                shape,
                data: data.to_vec(),
            })
            .collect();
        Ok(Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            schema_hash: model.schema.hash(),
            config: config.clone(),
            encoder: encoder.clone(),
            embed_dim: d,
            hidden_dim: h,
            arrays,
        })
    }

    /// Rebuild the model, checking the format tag, schema hash and every shape.
    pub fn model(&self) -> Result<AttentionClassifier> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format {:?}", self.format)));
        }
        let schema = self.encoder.schema.clone();
        if schema.hash() != self.schema_hash {
            return Err(Error::Schema("checkpoint schema hash mismatch".into()));
        }
        let mut model = AttentionClassifier::zeros(schema, self.embed_dim, self.hidden_dim)?;
        if self.arrays.len() != Parameters::NAMES.len() {
            return Err(Error::Shape(format!("expected 6 arrays, found {}", self.arrays.len())));
        }
        for ((array, name), slot) in self
            .arrays
            .iter()
            .zip(Parameters::NAMES)
            .zip(model.params.tensors_mut())
        {
            let count: usize = array.shape.iter().product();
            if array.name != name || count != array.data.len() || count != slot.len() {
                return Err(Error::Shape(format!(
                    "array {:?} with shape {:?} does not fit parameter {name}",
                    array.name, array.shape
                )));
            }
            slot.copy_from_slice(&array.data);
        }
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::generate_scenario2;
    use crate::nn::train;

    fn trained() -> (AttentionClassifier, Encoder, TrainConfig) {
        let ds = generate_scenario2(300, 4).unwrap();
        let enc = Encoder::fit(&ds).unwrap();
        let samples = enc.encode(&ds).unwrap();
        let cfg = TrainConfig {
            embed_dim: 3,
            hidden_dim: 5,
            epochs: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        (train(&enc.schema, &samples, &cfg).unwrap(), enc, cfg)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (model, enc, cfg) = trained();
        let ck = Checkpoint::new(&model, &enc, &cfg).unwrap();
        let text = ck.to_json().unwrap();
        let back = Checkpoint::from_json(&text).unwrap();
        let restored = back.model().unwrap();
        for (a, b) in model.params.tensors().iter().zip(restored.params.tensors()) {
            let bits_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(back.encoder, enc);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn tampered_shape_rejected() {
        let (model, enc, cfg) = trained();
        let mut ck = Checkpoint::new(&model, &enc, &cfg).unwrap();
        ck.arrays[1].data.pop();
        assert!(ck.model().is_err());
    }

    #[test]
    fn schema_hash_checked() {
        let (model, enc, cfg) = trained();
        let mut ck = Checkpoint::new(&model, &enc, &cfg).unwrap();
        ck.schema_hash = "00".into();
        assert!(matches!(ck.model(), Err(Error::Schema(_))));
    }
}
