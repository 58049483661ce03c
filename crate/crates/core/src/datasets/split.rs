use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// train, validation, test
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl SplitSpec {
    pub fn standard(seed: u64) -> Self {
        SplitSpec {
            fractions: [0.7, 0.15, 0.15],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(Error::Config(format!(
                "split fractions must be positive, got {:?}",
                self.fractions
            )));
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }
}

/// Shuffle `0..n` with the split stream of `spec.seed` and cut it into three
/// disjoint parts. Train and validation sizes are rounded; test takes the rest.
pub fn split(n: usize, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    let n_train = (n as f64 * spec.fractions[0]).round() as usize;
    let n_val = (n as f64 * spec.fractions[1]).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Data(format!(
            "{n} rows cannot be split into three non-empty parts with {:?}",
            spec.fractions
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, Stream::Split));
    let test = order.split_off(n_train + n_val);
    let val = order.split_off(n_train);
    Ok(SplitIndices {
        train: order,
        val,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_sizes() {
        let s = split(1000, &SplitSpec::standard(1)).unwrap();
        assert_eq!(s.sizes(), [700, 150, 150]);
    }

    #[test]
    fn disjoint_and_exhaustive() {
        let s = split(1000, &SplitSpec::standard(5)).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = split(300, &SplitSpec::standard(9)).unwrap();
        let b = split(300, &SplitSpec::standard(9)).unwrap();
        let c = split(300, &SplitSpec::standard(10)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn bad_fractions() {
        let spec = SplitSpec {
            fractions: [0.7, 0.3, 0.0],
            seed: 0,
        };
        assert!(split(100, &spec).is_err());
        let spec = SplitSpec {
            fractions: [0.5, 0.3, 0.3],
            seed: 0,
        };
        assert!(split(100, &spec).is_err());
        assert!(split(2, &SplitSpec::standard(0)).is_err());
    }
}
