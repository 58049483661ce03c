//! Feature schema and the fitted encoder that turns raw rows into embedding
//! row indices.
//!
//! Every feature owns a contiguous block of embedding rows. A categorical
//! feature with `c` known values owns `c + 1` rows: local id 0 is the reserved
//! unknown entity and known values map to `1..=c` in sorted order. A continuous
//! feature with `b` bins owns `b` rows; values are clamped into the outer bins.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets::{Cell, ColumnKind, Dataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical { cardinality: usize },
    Continuous { bins: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    pub is_sensitive: bool,
}

impl FeatureSpec {
    /// Embedding rows owned by this feature.
    pub fn block_size(&self) -> usize {
        match self.kind {
            FeatureKind::Categorical { cardinality } => cardinality + 1,
            FeatureKind::Continuous { bins } => bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureSpec>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = FeatureSchema { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let sensitive = self.features.iter().filter(|f| f.is_sensitive).count();
        if sensitive != 1 {
            return Err(Error::Schema(format!(
                "exactly one sensitive feature required, found {sensitive}"
            )));
        }
        let mut names = BTreeSet::new();
        for f in &self.features {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
            match f.kind {
                FeatureKind::Categorical { cardinality } if cardinality < 2 => {
                    return Err(Error::Schema(format!(
                        "feature {}: cardinality {cardinality} < 2",
                        f.name
                    )))
                }
                FeatureKind::Continuous { bins } if bins < 2 => {
                    return Err(Error::Schema(format!("feature {}: bins {bins} < 2", f.name)))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn sensitive_index(&self) -> usize {
        self.features
            .iter()
            .position(|f| f.is_sensitive)
            .expect("validated schema has a sensitive feature")
    }

    /// Number of sensitive groups `l`.
    pub fn n_groups(&self) -> usize {
        match self.features[self.sensitive_index()].kind {
            FeatureKind::Categorical { cardinality } => cardinality,
            FeatureKind::Continuous { bins } => bins,
        }
    }

    /// First embedding row of each feature block.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.features
            .iter()
            .map(|f| {
                let start = acc;
                acc += f.block_size();
                start
            })
            .collect()
    }

    pub fn total_entities(&self) -> usize {
        self.features.iter().map(FeatureSpec::block_size).sum()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn check_sample(&self, sample: &EncodedSample) -> Result<()> {
        if sample.entity_ids.len() != self.len() {
            return Err(Error::Shape(format!(
                "sample has {} entity ids, schema has {} features",
                sample.entity_ids.len(),
                self.len()
            )));
        }
        let offsets = self.offsets();
        for (k, (&id, f)) in sample.entity_ids.iter().zip(&self.features).enumerate() {
            if id < offsets[k] || id >= offsets[k] + f.block_size() {
                return Err(Error::Shape(format!(
                    "entity id {id} outside the block of feature {}",
                    f.name
                )));
            }
        }
        if sample.label > 1 {
            return Err(Error::Shape(format!("label {} is not binary", sample.label)));
        }
        if sample.group >= self.n_groups() {
            return Err(Error::Shape(format!("group {} out of range", sample.group)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedSample {
    /// One global embedding row per feature, in schema order.
    pub entity_ids: Vec<usize>,
    pub label: u8,
    pub group: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Codec {
    /// Sorted known values; value `vocab[i]` has local id `i + 1`.
    Vocabulary { vocab: Vec<String> },
    /// Interior quantile edges; `bins - 1` of them.
    BinEdges { edges: Vec<f64> },
}

impl Codec {
    fn local_id(&self, cell: &Cell) -> Option<usize> {
        match (self, cell) {
            (Codec::Vocabulary { vocab }, Cell::Cat(s)) => Some(
                vocab
                    .binary_search_by(|v| v.as_str().cmp(s))
                    .map_or(0, |i| i + 1),
            ),
            (Codec::BinEdges { edges }, Cell::Num(v)) if v.is_finite() => {
                Some(edges.partition_point(|&e| e <= *v))
            }
            _ => None,
        }
    }
}

/// Vocabularies and bin edges fitted on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub schema: FeatureSchema,
    pub codecs: Vec<Codec>,
}

impl Encoder {
    pub fn fit(train: &Dataset) -> Result<Self> {
        train.validate()?;
        if train.is_empty() {
            return Err(Error::Data("cannot fit an encoder on an empty split".into()));
        }
        let mut features = Vec::with_capacity(train.columns.len());
        let mut codecs = Vec::with_capacity(train.columns.len());
        for (k, col) in train.columns.iter().enumerate() {
            match col.kind {
                ColumnKind::Categorical => {
                    let vocab: BTreeSet<&str> = train
                        .rows
                        .iter()
                        .map(|r| match &r[k] {
                            Cell::Cat(s) => s.as_str(),
                            Cell::Num(_) => unreachable!("validated"),
                        })
                        .collect();
                    let vocab: Vec<String> = vocab.into_iter().map(str::to_owned).collect();
                    features.push(FeatureSpec {
                        name: col.name.clone(),
                        // a single observed value still gets two slots so the
                        // schema invariant holds; the second is never hit
                        kind: FeatureKind::Categorical {
                            cardinality: vocab.len().max(2),
                        },
                        is_sensitive: col.sensitive,
                    });
                    codecs.push(Codec::Vocabulary { vocab });
                }
                ColumnKind::Continuous { bins } => {
                    let mut values: Vec<f64> = train
                        .rows
                        .iter()
                        .map(|r| match r[k] {
                            Cell::Num(v) => v,
                            Cell::Cat(_) => unreachable!("validated"),
                        })
                        .collect();
                    values.sort_by(f64::total_cmp);
                    features.push(FeatureSpec {
                        name: col.name.clone(),
                        kind: FeatureKind::Continuous { bins },
                        is_sensitive: col.sensitive,
                    });
                    codecs.push(Codec::BinEdges {
                        edges: quantile_edges(&values, bins),
                    });
                }
            }
        }
        Ok(Encoder {
            schema: FeatureSchema::new(features)?,
            codecs,
        })
    }

    /// Encode every row; see [`encode_dataset`].
    pub fn encode(&self, data: &Dataset) -> Result<Vec<EncodedSample>> {
        encode_dataset(self, data)
    }
}

/// Map raw rows to entity ids with a fitted encoder. Unseen categorical values
/// map to the feature's unknown entity; an unseen sensitive value has no group
/// and is rejected with its row index.
pub fn encode_dataset(encoder: &Encoder, data: &Dataset) -> Result<Vec<EncodedSample>> {
    let schema = &encoder.schema;
    if data.columns.len() != schema.len()
        || data.columns.iter().zip(&schema.features).any(|(c, f)| c.name != f.name)
    {
        return Err(Error::Schema("dataset columns do not match the encoder".into()));
    }
    let offsets = schema.offsets();
    let sens = schema.sensitive_index();
    let mut out = Vec::with_capacity(data.len());
    for (i, (row, &label)) in data.rows.iter().zip(&data.labels).enumerate() {
        if row.len() != schema.len() {
            return Err(Error::row(i, format!("expected {} cells, found {}", schema.len(), row.len())));
        }
        if label > 1 {
            return Err(Error::row(i, format!("label {label} is not binary")));
        }
        let mut ids = Vec::with_capacity(row.len());
        let mut group = 0;
        for (k, (cell, codec)) in row.iter().zip(&encoder.codecs).enumerate() {
            let local = codec.local_id(cell).ok_or_else(|| {
                Error::row(i, format!("feature {}: malformed cell {cell:?}", schema.features[k].name))
            })?;
            if k == sens {
                group = match codec {
                    Codec::Vocabulary { .. } if local == 0 => {
                        return Err(Error::row(i, "sensitive value not seen in training"))
                    }
                    Codec::Vocabulary { .. } => local - 1,
                    Codec::BinEdges { .. } => local,
                };
            }
            ids.push(offsets[k] + local);
        }
        out.push(EncodedSample {
            entity_ids: ids,
            label,
            group,
        });
    }
    Ok(out)
}

/// `bins - 1` interior edges at the `j / bins` quantiles of sorted `values`,
/// linearly interpolated between order statistics.
fn quantile_edges(sorted: &[f64], bins: usize) -> Vec<f64> {
    let n = sorted.len();
    (1..bins)
        .map(|j| {
            let pos = (n - 1) as f64 * j as f64 / bins as f64;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let t = pos - lo as f64;
            sorted[lo] + t * (sorted[hi] - sorted[lo])
        })
        .collect()
}
