use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{now_ms, RunManifest};
use super::{plot, prepare_with, seed_run, train_seed, DataSource, ExperimentConfig, PreparedData};
use crate::attribution::{attribute_global, fmt_opt, rank_features, AttributionReport};
use crate::datasets::{write_csv, DatasetConfig};
use crate::error::{Error, Result};
use crate::fairness::{accuracy_of, GroupedPredictions, MetricKind};
use crate::mitigation::{
    apply_mitigation, identify_unfair_features, select_by_constraint, sweep_tradeoff, MitigationPlan,
};
use crate::nn::{predict, AttentionClassifier, Checkpoint, DEFAULT_THRESHOLD};
use crate::schema::EncodedSample;

/// A CLI command together with its command-specific options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    GenData,
    Train,
    Attribute {
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    Mitigate {
        decay: f64,
        #[serde(default)]
        checkpoint: Option<PathBuf>,
    },
    Sweep {
        #[serde(default)]
        max_metric: Option<f64>,
    },
    Report {
        top_k: usize,
    },
}

#[derive(Debug, Clone)]
pub struct JobOutput {
    pub artifacts: Vec<PathBuf>,
    pub manifest: PathBuf,
    /// human-readable summary for the terminal
    pub summary: String,
}

struct Out<'a> {
    dir: &'a Path,
    artifacts: Vec<PathBuf>,
}

impl Out<'_> {
    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.artifacts.push(PathBuf::from(name));
        Ok(())
    }

    fn csv(&mut self, name: &str, fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
        let mut buf = Vec::new();
        fill(&mut buf)?;
        let text = String::from_utf8(buf).expect("csv output is utf-8");
        self.write(name, &text)?;
        Ok(text)
    }
}

/// Run `job` with `cfg`, writing every artifact and a manifest into `out_dir`.
/// Identical inputs produce byte-identical artifacts.
pub fn execute(job: &Job, cfg: &ExperimentConfig, out_dir: &Path) -> Result<JobOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let started = now_ms();
    let mut out = Out {
        dir: out_dir,
        artifacts: Vec::new(),
    };
    let mut summary = String::new();
    let pending = match job {
        Job::GenData => gen_data(cfg, &mut out, &mut summary),
        Job::Train => run_train(cfg, &mut out, &mut summary),
        Job::Attribute { checkpoint } => run_attribute(cfg, checkpoint.as_deref(), &mut out, &mut summary),
        Job::Mitigate { decay, checkpoint } => {
            run_mitigate(cfg, *decay, checkpoint.as_deref(), &mut out, &mut summary)
        }
        Job::Sweep { max_metric } => run_sweep(cfg, *max_metric, &mut out, &mut summary),
        Job::Report { top_k } => run_report(cfg, *top_k, &mut out, &mut summary),
    };
    let manifest = RunManifest {
        job: job.clone(),
        config: cfg.clone(),
        artifacts: out.artifacts.clone(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
    };
    let manifest_path = manifest.save(out_dir)?;
    pending?;
    Ok(JobOutput {
        artifacts: out.artifacts,
        manifest: manifest_path,
        summary,
    })
}

fn gen_data(cfg: &ExperimentConfig, out: &mut Out<'_>, summary: &mut String) -> Result<()> {
    if !matches!(cfg.source, DataSource::Scenario { .. }) {
        return Err(Error::Config("gen-data needs a synthetic scenario source".into()));
    }
    let seed = cfg.seeds[0];
    let ds = cfg.source.load(seed)?;
    let path = out.dir.join("data.csv");
    write_csv(&ds, &path)?;
    out.artifacts.push("data.csv".into());
    out.write("data.toml", DatasetConfig::for_dataset(&ds).to_toml_string())?;
    let _ = writeln!(summary, "wrote {} rows of {} (seed {seed})", ds.len(), cfg.source.describe());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SplitMetrics {
    accuracy: f64,
    spd: Option<f64>,
    eqopp: Option<f64>,
    eqodd: Option<f64>,
}

fn split_metrics(model: &AttentionClassifier, samples: &[EncodedSample]) -> Result<SplitMetrics> {
    let preds = predict(model, samples, None, DEFAULT_THRESHOLD);
    metrics_of(&preds, samples, model.schema.n_groups())
}

fn metrics_of(preds: &[u8], samples: &[EncodedSample], n_groups: usize) -> Result<SplitMetrics> {
    let y: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let a: Vec<usize> = samples.iter().map(|s| s.group).collect();
    let gp = GroupedPredictions::new(preds, &y, &a, n_groups)?;
    let get = |k: MetricKind| k.compute(&gp).ok();
    Ok(SplitMetrics {
        accuracy: accuracy_of(preds, &y)?,
        spd: get(MetricKind::Spd),
        eqopp: get(MetricKind::EqOpp),
        eqodd: get(MetricKind::EqOdd),
    })
}

fn train_all(cfg: &ExperimentConfig) -> Result<Vec<(PreparedData, AttentionClassifier)>> {
    cfg.seeds.par_iter().map(|&s| train_seed(cfg, s)).collect()
}

fn run_train(cfg: &ExperimentConfig, out: &mut Out<'_>, summary: &mut String) -> Result<()> {
    let runs = train_all(cfg)?;
    let mut rows = Vec::new();
    for (data, model) in &runs {
        let ck = Checkpoint::new(model, &data.encoder, &cfg.train_config(data.seed))?;
        out.write(&format!("checkpoint_seed{}.json", data.seed), ck.to_json()?)?;
        for (split, samples) in [("val", &data.val), ("test", &data.test)] {
            rows.push((data.seed, split, split_metrics(model, samples)?));
        }
    }
    out.csv("metrics.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["seed", "split", "accuracy", "spd", "eqopp", "eqodd"])?;
        for (seed, split, m) in &rows {
            w.write_record([
                seed.to_string(),
                split.to_string(),
                m.accuracy.to_string(),
                fmt_opt(m.spd),
                fmt_opt(m.eqopp),
                fmt_opt(m.eqodd),
            ])?;
        }
        Ok(())
    })?;
    for (seed, split, m) in rows.iter().filter(|r| r.1 == "test") {
        let _ = writeln!(
            summary,
            "seed {seed}: {split} accuracy {:.4}  SPD {}  EqOpp {}  EqOdd {}",
            m.accuracy,
            short(m.spd),
            short(m.eqopp),
            short(m.eqodd)
        );
    }
    Ok(())
}

fn short(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
}

/// Trained runs, either fresh per seed or a single run restored from a
/// checkpoint (whose training seed then selects the data).
fn runs_for(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<Vec<(PreparedData, AttentionClassifier)>> {
    match checkpoint {
        None => train_all(cfg),
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let model = ck.model()?;
            let data = prepare_with(cfg, ck.config.seed, Some(&ck.encoder))?;
            Ok(vec![(data, model)])
        }
    }
}

/// `label,accuracy,metric` rows: the original model then each zeroed feature.
pub(crate) fn attribution_points_csv(report: &AttributionReport, kind: MetricKind) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "accuracy", "metric"])?;
    if let Some(b) = report.baseline.metric(kind) {
        w.write_record(["original".to_owned(), report.baseline.accuracy.to_string(), b.to_string()])?;
    }
    let mut entries: Vec<_> = report.entries_for(kind).collect();
    entries.sort_by_key(|e| e.feature_index);
    for e in entries {
        if let Some(m) = e.metric_zeroed {
            w.write_record([e.feature.clone(), e.accuracy_zeroed.to_string(), m.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf-8"))
}

fn run_attribute(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    out: &mut Out<'_>,
    summary: &mut String,
) -> Result<()> {
    let runs = runs_for(cfg, checkpoint)?;
    for (data, model) in &runs {
        let mut report = attribute_global(model, data.eval(cfg.eval_split), &MetricKind::ALL)?;
        report.seed = Some(data.seed);
        report.split_sizes = Some(data.sizes());
        report.eval_split = Some(format!("{:?}", cfg.eval_split).to_lowercase());
        let s = data.seed;
        out.write(&format!("attribution_seed{s}.json"), report.to_json()?)?;
        out.csv(&format!("attribution_seed{s}.csv"), |buf| report.write_csv(buf))?;
        let points = attribution_points_csv(&report, cfg.metric)?;
        out.write(&format!("points_seed{s}.csv"), &points)?;
        let title = format!("{} by feature exclusion (seed {s})", cfg.metric);
        out.write(&format!("attribution_seed{s}.svg"), plot::scatter_svg(&points, &title, cfg.metric.name())?)?;

        let _ = writeln!(
            summary,
            "seed {s}: baseline accuracy {:.4}, {} {}",
            report.baseline.accuracy,
            cfg.metric,
            short(report.baseline.metric(cfg.metric))
        );
        for e in report.entries_for(cfg.metric) {
            let _ = writeln!(
                summary,
                "  zero {:<16} Δ{} {:>9}  Δaccuracy {:+.4}",
                e.feature,
                cfg.metric,
                e.delta_metric.map_or_else(|| "undefined".into(), |d| format!("{d:+.4}")),
                e.delta_accuracy
            );
        }
    }
    Ok(())
}

fn run_mitigate(
    cfg: &ExperimentConfig,
    decay: f64,
    checkpoint: Option<&Path>,
    out: &mut Out<'_>,
    summary: &mut String,
) -> Result<()> {
    MitigationPlan::new(vec![], decay)?;
    let runs = runs_for(cfg, checkpoint)?;
    for (data, model) in &runs {
        let s = data.seed;
        let set = identify_unfair_features(model, &data.val, cfg.metric, cfg.inclusion_threshold)?;
        let plan = MitigationPlan::from_set(&set, decay)?;
        let before = predict(model, &data.test, None, DEFAULT_THRESHOLD);
        let after = apply_mitigation(model, &data.test, &plan)?;
        let n_groups = model.schema.n_groups();
        let mb = metrics_of(&before, &data.test, n_groups)?;
        let ma = metrics_of(&after, &data.test, n_groups)?;

        out.write(&format!("unfair_seed{s}.json"), serde_json::to_string_pretty(&set)?)?;
        out.csv(&format!("predictions_seed{s}.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["row", "label", "group", "before", "after"])?;
            for (i, ((x, b), a)) in data.test.iter().zip(&before).zip(&after).enumerate() {
                w.write_record([i.to_string(), x.label.to_string(), x.group.to_string(), b.to_string(), a.to_string()])?;
            }
            Ok(())
        })?;
        let table = [
            ("accuracy", Some(mb.accuracy), Some(ma.accuracy)),
            ("SPD", mb.spd, ma.spd),
            ("EqOpp", mb.eqopp, ma.eqopp),
            ("EqOdd", mb.eqodd, ma.eqodd),
        ];
        out.csv(&format!("mitigation_seed{s}.csv"), |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(["metric", "before", "after", "delta"])?;
            for (name, b, a) in table {
                let delta = b.zip(a).map(|(b, a)| a - b);
                w.write_record([name.to_owned(), fmt_opt(b), fmt_opt(a), fmt_opt(delta)])?;
            }
            Ok(())
        })?;

        let _ = writeln!(summary, "seed {s}: unfair features {:?} (d_r = {decay})", set.names);
        let _ = writeln!(summary, "  {:<9} {:>9} {:>9} {:>9}", "metric", "before", "after", "Δ");
        for (name, b, a) in table {
            let delta = b.zip(a).map(|(b, a)| a - b);
            let _ = writeln!(summary, "  {name:<9} {:>9} {:>9} {:>9}", short(b), short(a), short(delta));
        }
    }
    Ok(())
}

fn run_sweep(
    cfg: &ExperimentConfig,
    max_metric: Option<f64>,
    out: &mut Out<'_>,
    summary: &mut String,
) -> Result<()> {
    let curve = sweep_tradeoff(&cfg.seeds, &cfg.decays, cfg.metric, cfg.inclusion_threshold, |seed| {
        seed_run(cfg, seed)
    })?;
    let text = out.csv("curve.csv", |buf| curve.write_csv(buf))?;
    out.csv("per_seed.csv", |buf| curve.write_per_seed_csv(buf))?;
    out.write("curve.json", serde_json::to_string_pretty(&curve)?)?;
    let title = format!("accuracy vs {} ({} seeds)", cfg.metric, curve.per_seed.len());
    out.write("curve.svg", plot::curve_svg(&text, &title, cfg.metric.name())?)?;

    let _ = writeln!(summary, "{:>5} {:>16} {:>16}", "d_r", "accuracy", cfg.metric);
    for p in &curve.points {
        let _ = writeln!(
            summary,
            "{:>5.2} {:>8.4} ± {:.4} {:>8.4} ± {:.4}",
            p.decay, p.accuracy_mean, p.accuracy_std, p.metric_mean, p.metric_std
        );
    }
    for (seed, reason) in &curve.failed_seeds {
        let _ = writeln!(summary, "seed {seed} dropped: {reason}");
    }
    if let Some(limit) = max_metric {
        let p = select_by_constraint(&curve, limit)?;
        out.write("selected.json", serde_json::to_string_pretty(p)?)?;
        let _ = writeln!(
            summary,
            "selected d_r = {} (accuracy {:.4}, {} {:.4})",
            p.decay, p.accuracy_mean, cfg.metric, p.metric_mean
        );
    }
    Ok(())
}

fn run_report(cfg: &ExperimentConfig, top_k: usize, out: &mut Out<'_>, summary: &mut String) -> Result<()> {
    let runs = train_all(cfg)?;
    let reports = runs
        .iter()
        .map(|(data, model)| attribute_global(model, data.eval(cfg.eval_split), &MetricKind::ALL))
        .collect::<Result<Vec<_>>>()?;
    let mean = AttributionReport::mean(&reports)?;
    out.write("report_mean.json", mean.to_json()?)?;
    let mut rankings = Vec::new();
    for kind in MetricKind::ALL {
        rankings.push((kind, rank_features(&mean, kind, top_k)?));
    }
    out.csv("rankings.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["metric_kind", "rank", "feature", "delta_metric", "improvement_pct"])?;
        for (kind, ranked) in &rankings {
            for (i, r) in ranked.iter().enumerate() {
                w.write_record([
                    kind.to_string(),
                    (i + 1).to_string(),
                    r.feature.clone(),
                    fmt_opt(r.delta_metric),
                    fmt_opt(r.improvement_pct),
                ])?;
            }
        }
        Ok(())
    })?;
    for (kind, ranked) in &rankings {
        let _ = writeln!(summary, "{kind} (baseline {}):", short(mean.baseline.metric(*kind)));
        for (i, r) in ranked.iter().enumerate() {
            let pct = r.improvement_pct.map_or_else(|| "undefined".into(), |p| format!("{p:+.1}%"));
            let _ = writeln!(summary, "  {}. {:<16} {pct}", i + 1, r.feature);
        }
    }
    Ok(())
}
