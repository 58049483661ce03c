//! Attribution by attention intervention.
//!
//! For every feature `k` the model is re-evaluated with feature `k`'s attention
//! weight zeroed, giving predictions `ŷ_z^k` next to the original `ŷ_o`. A
//! feature's attribution for a metric is `metric(ŷ_o) − metric(ŷ_z^k)`:
//! positive means the feature contributes to unfairness.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::{accuracy_of, GroupedPredictions, MetricKind};
use crate::nn::{predict, AttentionClassifier, AttentionMask, DEFAULT_THRESHOLD};
use crate::schema::EncodedSample;

/// Original predictions and the predictions with each feature zeroed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Interventions {
    pub original: Vec<u8>,
    /// `zeroed[k]` is `ŷ_z^k`
    pub zeroed: Vec<Vec<u8>>,
}

impl Interventions {
    /// Evaluate the `m + 1` prediction vectors. Features run in parallel; the
    /// result is ordered by feature index.
    pub fn compute(model: &AttentionClassifier, samples: &[EncodedSample]) -> Self {
        let m = model.n_features();
        let original = predict(model, samples, None, DEFAULT_THRESHOLD);
        let zeroed = (0..m)
            .into_par_iter()
            .map(|k| {
                let mask = AttentionMask::zero_feature(m, k);
                predict(model, samples, Some(&mask), DEFAULT_THRESHOLD)
            })
            .collect();
        Interventions { original, zeroed }
    }

    pub fn changed(&self, k: usize) -> bool {
        self.zeroed[k] != self.original
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub accuracy: f64,
    pub spd: Option<f64>,
    pub eqopp: Option<f64>,
    pub eqodd: Option<f64>,
}

impl Baseline {
    pub fn metric(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Spd => self.spd,
            MetricKind::EqOpp => self.eqopp,
            MetricKind::EqOdd => self.eqodd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionEntry {
    pub feature: String,
    pub feature_index: usize,
    pub metric_kind: MetricKind,
    /// `metric(ŷ_o) − metric(ŷ_z^k)`; `None` if either side is undefined.
    pub delta_metric: Option<f64>,
    pub delta_accuracy: f64,
    pub metric_zeroed: Option<f64>,
    pub accuracy_zeroed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub baseline: Baseline,
    /// Grouped by metric kind in the order requested, each group sorted by
    /// descending `delta_metric` (undefined last, ties in schema order).
    pub entries: Vec<AttributionEntry>,
    pub n_eval: usize,
    #[serde(default)]
    pub seed: Option<u64>,
    /// train / validation / test sizes of the run that produced the report
    #[serde(default)]
    pub split_sizes: Option<[usize; 3]>,
    #[serde(default)]
    pub eval_split: Option<String>,
}

fn metric_of(kind: MetricKind, y_hat: &[u8], samples: &[EncodedSample], n_groups: usize) -> Result<Option<f64>> {
    let y: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let a: Vec<usize> = samples.iter().map(|s| s.group).collect();
    let gp = GroupedPredictions::new(y_hat, &y, &a, n_groups)?;
    match kind.compute(&gp) {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn labels(samples: &[EncodedSample]) -> Vec<u8> {
    samples.iter().map(|s| s.label).collect()
}

impl AttributionReport {
    /// Build a report from precomputed intervention predictions.
    pub fn from_interventions(
        model: &AttentionClassifier,
        samples: &[EncodedSample],
        iv: &Interventions,
        kinds: &[MetricKind],
    ) -> Result<Self> {
        let schema = &model.schema;
        let n_groups = schema.n_groups();
        let y = labels(samples);
        if iv.zeroed.len() != schema.len() {
            return Err(Error::Shape("one intervention per feature required".into()));
        }
        let baseline = Baseline {
            accuracy: accuracy_of(&iv.original, &y)?,
            spd: metric_of(MetricKind::Spd, &iv.original, samples, n_groups)?,
            eqopp: metric_of(MetricKind::EqOpp, &iv.original, samples, n_groups)?,
            eqodd: metric_of(MetricKind::EqOdd, &iv.original, samples, n_groups)?,
        };
        let mut entries = Vec::with_capacity(kinds.len() * schema.len());
        for &kind in kinds {
            let start = entries.len();
            for (k, zeroed) in iv.zeroed.iter().enumerate() {
                let metric_zeroed = metric_of(kind, zeroed, samples, n_groups)?;
                let accuracy_zeroed = accuracy_of(zeroed, &y)?;
                let delta_metric = match (baseline.metric(kind), metric_zeroed) {
                    (Some(b), Some(z)) => Some(b - z),
                    _ => None,
                };
                entries.push(AttributionEntry {
                    feature: schema.features[k].name.clone(),
                    feature_index: k,
                    metric_kind: kind,
                    delta_metric,
                    delta_accuracy: baseline.accuracy - accuracy_zeroed,
                    metric_zeroed,
                    accuracy_zeroed,
                });
            }
            entries[start..].sort_by(by_delta_desc);
        }
        Ok(AttributionReport {
            baseline,
            entries,
            n_eval: samples.len(),
            seed: None,
            split_sizes: None,
            eval_split: None,
        })
    }

    pub fn entries_for(&self, kind: MetricKind) -> impl Iterator<Item = &AttributionEntry> {
        self.entries.iter().filter(move |e| e.metric_kind == kind)
    }

    pub fn entry(&self, kind: MetricKind, feature_index: usize) -> Option<&AttributionEntry> {
        self.entries_for(kind).find(|e| e.feature_index == feature_index)
    }

    pub fn kinds(&self) -> Vec<MetricKind> {
        let mut kinds: Vec<MetricKind> = Vec::new();
        for e in &self.entries {
            if !kinds.contains(&e.metric_kind) {
                kinds.push(e.metric_kind);
            }
        }
        kinds
    }

    /// Average several reports over the same features (e.g. one per seed).
    /// Undefined deltas are left out of each mean.
    pub fn mean(reports: &[AttributionReport]) -> Result<AttributionReport> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Data("no reports to average".into()))?;
        let mean_opt = |vals: Vec<Option<f64>>| {
            let defined: Vec<f64> = vals.into_iter().flatten().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        };
        let n = reports.len() as f64;
        let baseline = Baseline {
            accuracy: reports.iter().map(|r| r.baseline.accuracy).sum::<f64>() / n,
            spd: mean_opt(reports.iter().map(|r| r.baseline.spd).collect()),
            eqopp: mean_opt(reports.iter().map(|r| r.baseline.eqopp).collect()),
            eqodd: mean_opt(reports.iter().map(|r| r.baseline.eqodd).collect()),
        };
        let mut entries = Vec::with_capacity(first.entries.len());
        for kind in first.kinds() {
            let start = entries.len();
            let mut template: Vec<&AttributionEntry> = first.entries_for(kind).collect();
            template.sort_by_key(|e| e.feature_index);
            for t in template {
                let matching: Vec<&AttributionEntry> = reports
                    .iter()
                    .map(|r| {
                        r.entry(kind, t.feature_index)
                            .filter(|e| e.feature == t.feature)
                            .ok_or_else(|| Error::Data("reports cover different features".into()))
                    })
                    .collect::<Result<_>>()?;
                entries.push(AttributionEntry {
                    feature: t.feature.clone(),
                    feature_index: t.feature_index,
                    metric_kind: kind,
                    delta_metric: mean_opt(matching.iter().map(|e| e.delta_metric).collect()),
                    delta_accuracy: matching.iter().map(|e| e.delta_accuracy).sum::<f64>() / n,
                    metric_zeroed: mean_opt(matching.iter().map(|e| e.metric_zeroed).collect()),
                    accuracy_zeroed: matching.iter().map(|e| e.accuracy_zeroed).sum::<f64>() / n,
                });
            }
            entries[start..].sort_by(by_delta_desc);
        }
        Ok(AttributionReport {
            baseline,
            entries,
            n_eval: first.n_eval,
            seed: None,
            split_sizes: first.split_sizes,
            eval_split: first.eval_split.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Flat CSV: `feature,metric_kind,delta_metric,delta_accuracy`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["feature", "metric_kind", "delta_metric", "delta_accuracy"])?;
        for e in &self.entries {
            w.write_record([
                e.feature.clone(),
                e.metric_kind.to_string(),
                fmt_opt(e.delta_metric),
                e.delta_accuracy.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_owned(), |v| v.to_string())
}

fn by_delta_desc(a: &AttributionEntry, b: &AttributionEntry) -> Ordering {
    match (a.delta_metric, b.delta_metric) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    }
    .then(a.feature_index.cmp(&b.feature_index))
}

/// Global attribution of every feature for each metric in `kinds`, evaluated
/// on `samples`. The model is only read.
pub fn attribute_global(
    model: &AttentionClassifier,
    samples: &[EncodedSample],
    kinds: &[MetricKind],
) -> Result<AttributionReport> {
    if samples.is_empty() {
        return Err(Error::Data("attribution needs a non-empty evaluation set".into()));
    }
    for s in samples {
        model.schema.check_sample(s)?;
    }
    let iv = Interventions::compute(model, samples);
    AttributionReport::from_interventions(model, samples, &iv, kinds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalEntry {
    pub feature: String,
    /// unmasked attention weight of the feature
    pub alpha: f64,
    pub prob_zeroed: f64,
    pub flip: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalAttribution {
    pub prob: f64,
    pub prediction: u8,
    pub features: Vec<LocalEntry>,
}

/// Per-sample attribution: the sample's attention weights and how its
/// probability and prediction move when each feature is zeroed.
pub fn attribute_local(model: &AttentionClassifier, sample: &EncodedSample) -> Result<LocalAttribution> {
    model.schema.check_sample(sample)?;
    let m = model.n_features();
    let full = model.forward(sample, None);
    let prediction = u8::from(full.prob >= DEFAULT_THRESHOLD);
    let features = (0..m)
        .map(|k| {
            let mask = AttentionMask::zero_feature(m, k);
            let prob_zeroed = model.prob(sample, Some(&mask));
            LocalEntry {
                feature: model.schema.features[k].name.clone(),
                alpha: full.attention[k],
                prob_zeroed,
                flip: u8::from(prob_zeroed >= DEFAULT_THRESHOLD) != prediction,
            }
        })
        .collect();
    Ok(LocalAttribution {
        prob: full.prob,
        prediction,
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub feature_index: usize,
    pub delta_metric: Option<f64>,
    /// `100 · delta / baseline`; `None` when the baseline metric is 0 or
    /// either value is undefined.
    pub improvement_pct: Option<f64>,
}

/// The `top_n` features with the largest metric improvement on removal.
pub fn rank_features(report: &AttributionReport, kind: MetricKind, top_n: usize) -> Result<Vec<RankedFeature>> {
    let mut entries: Vec<&AttributionEntry> = report.entries_for(kind).collect();
    if entries.is_empty() {
        return Err(Error::Data(format!("report has no {kind} entries")));
    }
    entries.sort_by(|a, b| by_delta_desc(a, b));
    let base = report.baseline.metric(kind).filter(|&b| b > 0.0);
    Ok(entries
        .into_iter()
        .take(top_n)
        .map(|e| RankedFeature {
            feature: e.feature.clone(),
            feature_index: e.feature_index,
            delta_metric: e.delta_metric,
            improvement_pct: match (e.delta_metric, base) {
                (Some(d), Some(b)) => Some(100.0 * d / b),
                _ => None,
            },
        })
        .collect())
}
