//! Post-processing bias mitigation by attention decay.
//!
//! Features whose removal does not worsen the chosen fairness metric form the
//! unfair set; at test time their attention weights are multiplied by a decay
//! rate `d_r ∈ [0, 1)`. Sweeping `d_r` from 1 down to 0 traces an
//! accuracy-versus-fairness curve. Model parameters are never modified.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionReport, Interventions};
use crate::error::{Error, Result};
use crate::fairness::{accuracy_of, GroupedPredictions, MetricKind};
use crate::nn::{predict, AttentionClassifier, AttentionMask, DEFAULT_THRESHOLD};
use crate::schema::EncodedSample;

/// Default decay grid: the unmitigated baseline (1.0) then 0.9 down to 0.0.
pub fn default_decay_grid() -> Vec<f64> {
    (0..=10).rev().map(|i| f64::from(i) / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnfairFeatureSet {
    pub metric_kind: MetricKind,
    pub threshold: f64,
    /// Feature indices in schema order.
    pub features: Vec<usize>,
    pub names: Vec<String>,
    /// Per-feature `metric(ŷ_o) − metric(ŷ_z^k)` in schema order.
    pub deltas: Vec<Option<f64>>,
    /// Qualified by the threshold but dropped because zeroing them changes
    /// no prediction.
    pub pruned: Vec<usize>,
    pub warnings: Vec<String>,
    /// Every delta is exactly zero: the evaluation data cannot separate the
    /// features.
    pub degenerate: bool,
}

/// Identify the unfair features of `model` on `eval` for `kind`: feature `k` is
/// kept iff `metric(ŷ_o) − metric(ŷ_z^k) ≥ threshold` and zeroing it changes at
/// least one prediction.
pub fn identify_unfair_features(
    model: &AttentionClassifier,
    eval: &[EncodedSample],
    kind: MetricKind,
    threshold: f64,
) -> Result<UnfairFeatureSet> {
    if eval.is_empty() {
        return Err(Error::Data("identification needs a non-empty evaluation set".into()));
    }
    let iv = Interventions::compute(model, eval);
    let report = AttributionReport::from_interventions(model, eval, &iv, &[kind])?;
    let m = model.n_features();
    let deltas: Vec<Option<f64>> = (0..m)
        .map(|k| report.entry(kind, k).and_then(|e| e.delta_metric))
        .collect();

    let mut features = Vec::new();
    let mut pruned = Vec::new();
    let mut warnings = Vec::new();
    for (k, delta) in deltas.iter().enumerate() {
        let name = &model.schema.features[k].name;
        match *delta {
            None => warnings.push(format!("{kind} undefined when zeroing {name}; feature excluded")),
            Some(d) if d >= threshold => {
                if d == 0.0 && !iv.changed(k) {
                    pruned.push(k);
                } else {
                    features.push(k);
                }
            }
            Some(_) => {}
        }
    }
    let degenerate = deltas.iter().all(|d| *d == Some(0.0));
    Ok(UnfairFeatureSet {
        metric_kind: kind,
        threshold,
        names: features.iter().map(|&k| model.schema.features[k].name.clone()).collect(),
        features,
        deltas,
        pruned,
        warnings,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationPlan {
    /// Feature indices to decay.
    pub features: Vec<usize>,
    pub decay: f64,
    /// Optional per-feature decay overriding `decay`, aligned with `features`.
    #[serde(default)]
    pub per_feature_decay: Option<Vec<f64>>,
}

impl MitigationPlan {
    pub fn new(features: Vec<usize>, decay: f64) -> Result<Self> {
        let plan = MitigationPlan {
            features,
            decay,
            per_feature_decay: None,
        };
        plan.validate(usize::MAX)?;
        Ok(plan)
    }

    pub fn from_set(set: &UnfairFeatureSet, decay: f64) -> Result<Self> {
        Self::new(set.features.clone(), decay)
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        let ok = |d: f64| (0.0..1.0).contains(&d);
        if !ok(self.decay) {
            return Err(Error::Config(format!("decay rate {} outside [0, 1)", self.decay)));
        }
        if let Some(per) = &self.per_feature_decay {
            if per.len() != self.features.len() || !per.iter().all(|&d| ok(d)) {
                return Err(Error::Config("per-feature decays must align with features and lie in [0, 1)".into()));
            }
        }
        if let Some(&k) = self.features.iter().find(|&&k| k >= n_features) {
            return Err(Error::Config(format!("feature index {k} out of range")));
        }
        Ok(())
    }

    pub fn mask(&self, n_features: usize) -> Result<AttentionMask> {
        self.validate(n_features)?;
        let mut mult = vec![1.0; n_features];
        for (i, &k) in self.features.iter().enumerate() {
            mult[k] = self.per_feature_decay.as_ref().map_or(self.decay, |p| p[i]);
        }
        AttentionMask::new(mult)
    }
}

/// Predictions with the plan's decay applied to the attention weights.
pub fn apply_mitigation(
    model: &AttentionClassifier,
    samples: &[EncodedSample],
    plan: &MitigationPlan,
) -> Result<Vec<u8>> {
    let mask = plan.mask(model.n_features())?;
    Ok(predict(model, samples, Some(&mask), DEFAULT_THRESHOLD))
}

/// Accuracy and metric at each decay rate over `features`. A decay of exactly
/// 1.0 denotes the unmitigated model.
pub fn evaluate_decays(
    model: &AttentionClassifier,
    samples: &[EncodedSample],
    features: &[usize],
    kind: MetricKind,
    decays: &[f64],
) -> Result<Vec<(f64, f64, f64)>> {
    let y: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let a: Vec<usize> = samples.iter().map(|s| s.group).collect();
    let n_groups = model.schema.n_groups();
    decays
        .par_iter()
        .map(|&d| {
            let preds = if d == 1.0 {
                predict(model, samples, None, DEFAULT_THRESHOLD)
            } else {
                apply_mitigation(model, samples, &MitigationPlan::new(features.to_vec(), d)?)?
            };
            let gp = GroupedPredictions::new(&preds, &y, &a, n_groups)?;
            Ok((d, accuracy_of(&preds, &y)?, kind.compute(&gp)?))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: u64,
    pub unfair: UnfairFeatureSet,
    /// `(decay, accuracy, metric)` in grid order
    pub points: Vec<(f64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub decay: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub metric_mean: f64,
    pub metric_std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub metric_kind: MetricKind,
    /// ordered by decay, descending
    pub points: Vec<TradeoffPoint>,
    pub per_seed: Vec<SeedCurve>,
    /// seeds whose run failed, with the reason
    pub failed_seeds: Vec<(u64, String)>,
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl TradeoffCurve {
    /// Aggregate per-seed curves evaluated on the same decay grid.
    pub fn aggregate(
        kind: MetricKind,
        per_seed: Vec<SeedCurve>,
        failed_seeds: Vec<(u64, String)>,
    ) -> Result<Self> {
        let first = per_seed
            .first()
            .ok_or_else(|| Error::Data("no successful seeds to aggregate".into()))?;
        let grid: Vec<f64> = first.points.iter().map(|p| p.0).collect();
        if per_seed
            .iter()
            .any(|s| s.points.iter().map(|p| p.0).ne(grid.iter().copied()))
        {
            return Err(Error::Data("seed curves use different decay grids".into()));
        }
        let mut points: Vec<TradeoffPoint> = grid
            .iter()
            .enumerate()
            .map(|(i, &decay)| {
                let acc: Vec<f64> = per_seed.iter().map(|s| s.points[i].1).collect();
                let met: Vec<f64> = per_seed.iter().map(|s| s.points[i].2).collect();
                let (accuracy_mean, accuracy_std) = mean_std(&acc);
                let (metric_mean, metric_std) = mean_std(&met);
                TradeoffPoint {
                    decay,
                    accuracy_mean,
                    accuracy_std,
                    metric_mean,
                    metric_std,
                    n_seeds: per_seed.len(),
                }
            })
            .collect();
        points.sort_by(|a, b| b.decay.total_cmp(&a.decay));
        Ok(TradeoffCurve {
            metric_kind: kind,
            points,
            per_seed,
            failed_seeds,
        })
    }

    pub fn baseline(&self) -> Option<&TradeoffPoint> {
        self.points.iter().find(|p| p.decay == 1.0)
    }

    /// CSV: `d_r,acc_mean,acc_std,metric_mean,metric_std,n_seeds`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["d_r", "acc_mean", "acc_std", "metric_mean", "metric_std", "n_seeds"])?;
        for p in &self.points {
            w.write_record([
                p.decay.to_string(),
                p.accuracy_mean.to_string(),
                p.accuracy_std.to_string(),
                p.metric_mean.to_string(),
                p.metric_std.to_string(),
                p.n_seeds.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    /// CSV of the raw per-seed values: `seed,d_r,accuracy,metric`.
    pub fn write_per_seed_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["seed", "d_r", "accuracy", "metric"])?;
        for s in &self.per_seed {
            for &(d, acc, met) in &s.points {
                w.write_record([s.seed.to_string(), d.to_string(), acc.to_string(), met.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

/// One seed's trained model with its validation and test samples.
pub struct SeedRun {
    pub seed: u64,
    pub model: AttentionClassifier,
    pub val: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

/// For each seed: obtain a trained model through `prepare`, identify the
/// unfair set on validation data, evaluate every decay on test data, then
/// aggregate across seeds. Seeds run in parallel; failed seeds are dropped and
/// recorded. Decays must lie in `[0, 1]`, with 1.0 the unmitigated baseline.
pub fn sweep_tradeoff<F>(
    seeds: &[u64],
    decays: &[f64],
    kind: MetricKind,
    threshold: f64,
    prepare: F,
) -> Result<TradeoffCurve>
where
    F: Fn(u64) -> Result<SeedRun> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed required".into()));
    }
    if decays.is_empty() || decays.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return Err(Error::Config("decay grid must be non-empty and within [0, 1]".into()));
    }
    let outcomes: Vec<Result<SeedCurve>> = seeds
        .par_iter()
        .map(|&seed| {
            let run = prepare(seed)?;
            let unfair = identify_unfair_features(&run.model, &run.val, kind, threshold)?;
            let points = evaluate_decays(&run.model, &run.test, &unfair.features, kind, decays)?;
            Ok(SeedCurve { seed, unfair, points })
        })
        .collect();
    let mut per_seed = Vec::new();
    let mut failed = Vec::new();
    for (&seed, outcome) in seeds.iter().zip(outcomes) {
        match outcome {
            Ok(c) => per_seed.push(c),
            Err(e) => failed.push((seed, e.to_string())),
        }
    }
    if per_seed.is_empty() {
        let reasons: Vec<String> = failed.iter().map(|(s, e)| format!("seed {s}: {e}")).collect();
        return Err(Error::Data(format!("every seed failed: {}", reasons.join("; "))));
    }
    TradeoffCurve::aggregate(kind, per_seed, failed)
}

/// The most accurate point whose mean metric is at most `max_metric`.
pub fn select_by_constraint(curve: &TradeoffCurve, max_metric: f64) -> Result<&TradeoffPoint> {
    curve
        .points
        .iter()
        .filter(|p| p.metric_mean <= max_metric)
        .fold(None, |best: Option<&TradeoffPoint>, p| match best {
            Some(b) if b.accuracy_mean >= p.accuracy_mean => Some(b),
            _ => Some(p),
        })
        .ok_or_else(|| {
            Error::Infeasible(format!("no curve point has mean {} <= {max_metric}", curve.metric_kind))
        })
}
