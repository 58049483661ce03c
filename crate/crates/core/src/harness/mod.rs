//! Reproducible experiment driver: data preparation per seed, the job runners
//! behind each CLI command, run manifests and plots.

mod jobs;
mod manifest;
pub mod plot;

pub use jobs::{execute, Job, JobOutput};
pub use manifest::RunManifest;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{self, Dataset, DatasetConfig, Scenario, SplitSpec, SyntheticSpec};
use crate::error::{Error, Result};
use crate::fairness::MetricKind;
use crate::mitigation::{default_decay_grid, SeedRun};
use crate::nn::{train, AttentionClassifier, TrainConfig};
use crate::schema::{EncodedSample, Encoder};

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataSource {
    Scenario { scenario: u8, n: usize },
    Csv { path: PathBuf, schema: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Scenario {
            scenario: 1,
            n: 10_000,
        }
    }
}

impl DataSource {
    /// Raw dataset for one seed. Synthetic data is regenerated from the seed;
    /// a CSV file is the same for every seed.
    pub fn load(&self, seed: u64) -> Result<Dataset> {
        match self {
            DataSource::Scenario { scenario, n } => {
                let scenario = Scenario::from_number(*scenario)
                    .ok_or_else(|| Error::Config(format!("unknown scenario {scenario} (expected 1 or 2)")))?;
                datasets::generate(&SyntheticSpec { scenario, n: *n, seed })
            }
            DataSource::Csv { path, schema } => {
                let cfg = DatasetConfig::from_path(schema)?;
                datasets::load_csv(path, &cfg)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            DataSource::Scenario { scenario, n } => format!("scenario {scenario} (n = {n})"),
            DataSource::Csv { path, .. } => path.display().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// `seed` is replaced by each run seed
    pub train: TrainConfig,
    pub metric: MetricKind,
    pub decays: Vec<f64>,
    pub seeds: Vec<u64>,
    pub split: [f64; 3],
    pub inclusion_threshold: f64,
    /// split on which global attribution is reported
    pub eval_split: EvalSplit,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: DataSource::default(),
            train: TrainConfig::default(),
            metric: MetricKind::Spd,
            decays: default_decay_grid(),
            seeds: DEFAULT_SEEDS.to_vec(),
            split: [0.7, 0.15, 0.15],
            inclusion_threshold: 0.0,
            eval_split: EvalSplit::Test,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list must not be empty".into()));
        }
        if self.decays.is_empty() || self.decays.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::Config("decay grid must be non-empty and within [0, 1]".into()));
        }
        if let DataSource::Scenario { scenario, n } = self.source {
            if Scenario::from_number(scenario).is_none() {
                return Err(Error::Config(format!("unknown scenario {scenario} (expected 1 or 2)")));
            }
            if n == 0 {
                return Err(Error::Config("sample count must be >= 1".into()));
            }
        }
        SplitSpec {
            fractions: self.split,
            seed: 0,
        }
        .validate()?;
        self.train.validate()
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}

/// Encoded splits for one seed, with the encoder fitted on the train split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub seed: u64,
    pub encoder: Encoder,
    pub train: Vec<EncodedSample>,
    pub val: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

impl PreparedData {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn eval(&self, split: EvalSplit) -> &[EncodedSample] {
        match split {
            EvalSplit::Val => &self.val,
            EvalSplit::Test => &self.test,
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<PreparedData> {
    prepare_with(cfg, seed, None)
}

/// Like [`prepare`], encoding with `encoder` when given instead of fitting one.
pub fn prepare_with(cfg: &ExperimentConfig, seed: u64, encoder: Option<&Encoder>) -> Result<PreparedData> {
    let data = cfg.source.load(seed)?;
    let idx = datasets::split(
        data.len(),
        &SplitSpec {
            fractions: cfg.split,
            seed,
        },
    )?;
    let train_raw = data.subset(&idx.train);
    let encoder = match encoder {
        Some(e) => e.clone(),
        None => Encoder::fit(&train_raw)?,
    };
    Ok(PreparedData {
        seed,
        train: encoder.encode(&train_raw)?,
        val: encoder.encode(&data.subset(&idx.val))?,
        test: encoder.encode(&data.subset(&idx.test))?,
        encoder,
    })
}

/// Prepare data and train the model for one seed.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64) -> Result<(PreparedData, AttentionClassifier)> {
    let data = prepare(cfg, seed)?;
    let model = train(&data.encoder.schema, &data.train, &cfg.train_config(seed))?;
    Ok((data, model))
}

pub fn seed_run(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let (data, model) = train_seed(cfg, seed)?;
    Ok(SeedRun {
        seed,
        model,
        val: data.val,
        test: data.test,
    })
}
