//! Synthetic three-feature datasets with analytically known optima.
//!
//! Both scenarios draw `f1, f2 ∈ {0,1}`, `f3 ~ N(0,1)` and a binary label; `f1`
//! is the sensitive attribute.
//!
//! * Scenario one: `f1 ~ Ber(0.9)` independent of everything, `f2 ~ Ber(0.5)`,
//!   `y ~ Ber(0.9)` if `f2 = 1` else `Ber(0.1)`.
//! * Scenario two: `f2 ~ Ber(0.5)`, `f1 ~ Ber(0.9)` if `f2 = 1` else `Ber(0.1)`,
//!   `y ~ Ber(0.7)` if `f2 = 1` else `Ber(0.3)`.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Cell, ColumnKind, ColumnSpec, Dataset};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DEFAULT_CONTINUOUS_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    One,
    Two,
}

impl Scenario {
    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Scenario::One),
            2 => Some(Scenario::Two),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Scenario::One => 1,
            Scenario::Two => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub seed: u64,
}

pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.n == 0 {
        return Err(Error::Config("synthetic sample count must be >= 1".into()));
    }
    let mut rng = rng::stream(spec.seed, Stream::DataGen);
    let bern = |p: f64, rng: &mut rng::Rng| u8::from(rng.random::<f64>() < p);

    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let (f1, f2, y);
        match spec.scenario {
            Scenario::One => {
                f1 = bern(0.9, &mut rng);
                f2 = bern(0.5, &mut rng);
                y = bern(if f2 == 1 { 0.9 } else { 0.1 }, &mut rng);
            }
            Scenario::Two => {
                f2 = bern(0.5, &mut rng);
                f1 = bern(if f2 == 1 { 0.9 } else { 0.1 }, &mut rng);
                y = bern(if f2 == 1 { 0.7 } else { 0.3 }, &mut rng);
            }
        }
        let f3: f64 = rng.sample(StandardNormal);
        rows.push(vec![
            Cell::Cat(f1.to_string()),
            Cell::Cat(f2.to_string()),
            Cell::Num(f3),
        ]);
        labels.push(y);
    }
    Dataset::new(synthetic_columns(), rows, labels, "y")
}

pub fn generate_scenario1(n: usize, seed: u64) -> Result<Dataset> {
    generate(&SyntheticSpec {
        scenario: Scenario::One,
        n,
        seed,
    })
}

pub fn generate_scenario2(n: usize, seed: u64) -> Result<Dataset> {
    generate(&SyntheticSpec {
        scenario: Scenario::Two,
        n,
        seed,
    })
}

fn synthetic_columns() -> Vec<ColumnSpec> {
    vec![
        ColumnSpec {
            name: "f1".into(),
            kind: ColumnKind::Categorical,
            sensitive: true,
        },
        ColumnSpec {
            name: "f2".into(),
            kind: ColumnKind::Categorical,
            sensitive: false,
        },
        ColumnSpec {
            name: "f3".into(),
            kind: ColumnKind::Continuous {
                bins: DEFAULT_CONTINUOUS_BINS,
            },
            sensitive: false,
        },
    ]
}
