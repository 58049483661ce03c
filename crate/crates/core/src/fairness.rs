//! Group fairness metrics over binary predictions.
//!
//! Each metric is the largest absolute gap, over all pairs of sensitive
//! groups, in an empirical positive-prediction rate. Groups with no samples in
//! the relevant stratum are left out of the pairwise max; a metric with fewer
//! than two usable groups is undefined.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "SPD")]
    Spd,
    #[serde(rename = "EqOpp")]
    EqOpp,
    #[serde(rename = "EqOdd")]
    EqOdd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Spd, MetricKind::EqOpp, MetricKind::EqOdd];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Spd => "SPD",
            MetricKind::EqOpp => "EqOpp",
            MetricKind::EqOdd => "EqOdd",
        }
    }

    pub fn compute(self, gp: &GroupedPredictions<'_>) -> Result<f64> {
        match self {
            MetricKind::Spd => spd(gp),
            MetricKind::EqOpp => eqopp(gp),
            MetricKind::EqOdd => eqodd(gp),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spd" => Ok(MetricKind::Spd),
            "eqopp" => Ok(MetricKind::EqOpp),
            "eqodd" => Ok(MetricKind::EqOdd),
            _ => Err(Error::Config(format!("unknown metric {s:?} (expected spd, eqopp or eqodd)"))),
        }
    }
}

/// Predictions, labels and group ids of one evaluation set.
#[derive(Debug, Clone, Copy)]
pub struct GroupedPredictions<'a> {
    y_hat: &'a [u8],
    y: &'a [u8],
    group: &'a [usize],
    n_groups: usize,
}

impl<'a> GroupedPredictions<'a> {
    pub fn new(y_hat: &'a [u8], y: &'a [u8], group: &'a [usize], n_groups: usize) -> Result<Self> {
        if y_hat.len() != y.len() || y.len() != group.len() {
            return Err(Error::Shape(format!(
                "lengths differ: y_hat {}, y {}, group {}",
                y_hat.len(),
                y.len(),
                group.len()
            )));
        }
        if n_groups == 0 {
            return Err(Error::Config("at least one group required".into()));
        }
        if y_hat.iter().chain(y).any(|&v| v > 1) {
            return Err(Error::Shape("predictions and labels must be 0 or 1".into()));
        }
        if let Some(g) = group.iter().find(|&&g| g >= n_groups) {
            return Err(Error::Shape(format!("group id {g} >= {n_groups}")));
        }
        Ok(GroupedPredictions {
            y_hat,
            y,
            group,
            n_groups,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }

    /// (positives, count) per group among samples whose label passes `keep`.
    fn counts(&self, keep: impl Fn(u8) -> bool) -> Vec<(usize, usize)> {
        let mut c = vec![(0usize, 0usize); self.n_groups];
        for ((&yh, &y), &g) in self.y_hat.iter().zip(self.y).zip(self.group) {
            if keep(y) {
                c[g].0 += usize::from(yh);
                c[g].1 += 1;
            }
        }
        c
    }

    fn stratum_gap(&self, keep: impl Fn(u8) -> bool) -> Option<f64> {
        let rates: Vec<f64> = self
            .counts(keep)
            .into_iter()
            .filter(|&(_, n)| n > 0)
            .map(|(pos, n)| pos as f64 / n as f64)
            .collect();
        if rates.len() < 2 {
            return None;
        }
        let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }
}

/// Statistical parity difference.
pub fn spd(gp: &GroupedPredictions<'_>) -> Result<f64> {
    gp.stratum_gap(|_| true)
        .ok_or_else(|| Error::UndefinedMetric("SPD needs two non-empty groups".into()))
}

/// Equality of opportunity difference (true-positive-rate gap).
pub fn eqopp(gp: &GroupedPredictions<'_>) -> Result<f64> {
    gp.stratum_gap(|y| y == 1)
        .ok_or_else(|| Error::UndefinedMetric("EqOpp needs two groups with positive labels".into()))
}

/// Equalized odds difference: the larger of the TPR and FPR gaps. A stratum
/// with fewer than two populated groups is skipped.
pub fn eqodd(gp: &GroupedPredictions<'_>) -> Result<f64> {
    match (gp.stratum_gap(|y| y == 0), gp.stratum_gap(|y| y == 1)) {
        (Some(a), Some(b)) => Ok(a.max(b)),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::UndefinedMetric(
            "EqOdd needs two populated groups in some label stratum".into(),
        )),
    }
}

pub fn accuracy(gp: &GroupedPredictions<'_>) -> Result<f64> {
    accuracy_of(gp.y_hat, gp.y)
}

pub fn accuracy_of(y_hat: &[u8], y: &[u8]) -> Result<f64> {
    if y.is_empty() || y_hat.len() != y.len() {
        return Err(Error::Data("accuracy needs equal-length, non-empty inputs".into()));
    }
    let correct = y_hat.iter().zip(y).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / y.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: usize,
    pub count: usize,
    /// P(y = 1 | group)
    pub base_rate: Option<f64>,
    /// P(ŷ = 1 | group)
    pub selection_rate: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// Empirical rates for every group id in `0..n_groups`; `None` marks a rate
/// whose conditioning stratum is empty.
pub fn group_rate_table(gp: &GroupedPredictions<'_>) -> Vec<GroupRates> {
    let all = gp.counts(|_| true);
    let pos = gp.counts(|y| y == 1);
    let neg = gp.counts(|y| y == 0);
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
    (0..gp.n_groups)
        .map(|g| GroupRates {
            group: g,
            count: all[g].1,
            base_rate: ratio(pos[g].1, all[g].1),
            selection_rate: ratio(all[g].0, all[g].1),
            tpr: ratio(pos[g].0, pos[g].1),
            fpr: ratio(neg[g].0, neg[g].1),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gp<'a>(y_hat: &'a [u8], y: &'a [u8], a: &'a [usize]) -> GroupedPredictions<'a> {
        let l = a.iter().max().map_or(1, |m| m + 1).max(2);
        GroupedPredictions::new(y_hat, y, a, l).unwrap()
    }

    #[test]
    fn spd_examples() {
        let y = [0u8; 6];
        assert_eq!(spd(&gp(&[1, 1, 0, 0], &y[..4], &[0, 0, 1, 1])).unwrap(), 1.0);
        assert_eq!(spd(&gp(&[1, 0, 1, 0], &y[..4], &[0, 0, 1, 1])).unwrap(), 0.0);
        let v = spd(&gp(&[1, 1, 1, 0, 1, 0], &y, &[0, 0, 0, 1, 1, 1])).unwrap();
        assert_eq!(v, 1.0 - 1.0 / 3.0);
    }

    #[test]
    fn eqopp_examples() {
        let y = [1, 0, 1, 1, 0, 1];
        assert_eq!(eqopp(&gp(&y, &y, &[0, 0, 0, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(eqopp(&gp(&[1, 0, 1, 1], &[1, 1, 1, 1], &[0, 0, 1, 1])).unwrap(), 0.5);
        assert_eq!(eqopp(&gp(&[1, 0, 1, 0], &[1, 0, 1, 0], &[0, 0, 1, 1])).unwrap(), 0.0);
    }

    #[test]
    fn eqodd_examples() {
        let y = [1, 0, 1, 1, 0, 1];
        assert_eq!(eqodd(&gp(&y, &y, &[0, 0, 0, 1, 1, 1])).unwrap(), 0.0);
        assert_eq!(eqodd(&gp(&[1, 0, 1, 1], &[0, 0, 1, 1], &[0, 1, 0, 1])).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let y = [1, 0, 1, 0];
        let a = [0, 0, 1, 1];
        assert_eq!(accuracy(&gp(&y, &y, &a)).unwrap(), 1.0);
        assert_eq!(accuracy(&gp(&[0, 1, 0, 1], &y, &a)).unwrap(), 0.0);
        assert_eq!(accuracy(&gp(&[1, 1, 0, 0], &y, &a)).unwrap(), 0.5);
        assert!(accuracy_of(&[], &[]).is_err());
    }

    #[test]
    fn empty_groups_are_skipped() {
        // group 1 of 3 is empty
        let g = GroupedPredictions::new(&[1, 0, 1], &[1, 1, 1], &[0, 2, 2], 3).unwrap();
        assert_eq!(spd(&g).unwrap(), 0.5);
        let one = GroupedPredictions::new(&[1, 0], &[1, 1], &[0, 0], 2).unwrap();
        assert!(matches!(spd(&one), Err(Error::UndefinedMetric(_))));
        // nobody in group 1 has y = 1
        let g =
            GroupedPredictions::new(&[1, 0, 1, 0], &[1, 1, 0, 0], &[0, 0, 1, 0], 2).unwrap();
        assert!(eqopp(&g).is_err());
        assert_eq!(eqodd(&g).unwrap(), 1.0);
        let g = GroupedPredictions::new(&[1, 0, 1], &[1, 1, 0], &[0, 0, 1], 2).unwrap();
        assert!(eqodd(&g).is_err());
    }

    #[test]
    fn constructor_checks() {
        assert!(GroupedPredictions::new(&[1], &[1, 0], &[0, 1], 2).is_err());
        assert!(GroupedPredictions::new(&[2], &[1], &[0], 2).is_err());
        assert!(GroupedPredictions::new(&[1], &[1], &[5], 2).is_err());
    }

    #[test]
    fn rate_table() {
        let y = [1, 0, 1, 0];
        let t = group_rate_table(&gp(&y, &y, &[0, 0, 1, 1]));
        assert_eq!(t.len(), 2);
        for r in &t {
            assert_eq!(r.tpr, Some(1.0));
            assert_eq!(r.fpr, Some(0.0));
            assert_eq!(r.count, 2);
        }
        let single = GroupedPredictions::new(&[1, 0], &[1, 1], &[0, 0], 1).unwrap();
        let t = group_rate_table(&single);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].fpr, None);
    }

    #[test]
    fn metric_names_parse() {
        for k in MetricKind::ALL {
            assert_eq!(k.name().parse::<MetricKind>().unwrap(), k);
        }
        assert!("dp".parse::<MetricKind>().is_err());
    }
}
