//! Acceptance suite. Runs every exit criterion, prints one PASS/FAIL/SKIP line
//! per criterion and exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fairattn::attribution::{attribute_global, AttributionReport};
use fairattn::datasets::{generate_scenario1, generate_scenario2};
use fairattn::fairness::{eqodd, eqopp, spd, GroupedPredictions, MetricKind};
use fairattn::harness::{seed_run, train_seed, DataSource, ExperimentConfig, DEFAULT_SEEDS};
use fairattn::mitigation::{sweep_tradeoff, TradeoffCurve};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    id: u8,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let mut rng = common::instance_rng(0xF00D);
    let n = 100;
    let worst = (0..n)
        .map(|_| common::max_grad_error(&common::random_instance(&mut rng), 1e-4))
        .fold(0.0f64, f64::max);
    check(worst < 1e-4, format!("{n} instances, worst relative error {worst:.2e} (< 1e-4)"))
}

fn scenario_config(scenario: u8) -> ExperimentConfig {
    ExperimentConfig {
        source: DataSource::Scenario { scenario, n: 10_000 },
        ..ExperimentConfig::default()
    }
}

/// Test-split attribution report for every default seed.
fn scenario_reports(scenario: u8) -> Result<Vec<AttributionReport>, String> {
    let cfg = scenario_config(scenario);
    DEFAULT_SEEDS
        .par_iter()
        .map(|&seed| {
            let (data, model) = train_seed(&cfg, seed).map_err(|e| format!("seed {seed}: {e}"))?;
            attribute_global(&model, &data.test, &[MetricKind::Spd]).map_err(|e| format!("seed {seed}: {e}"))
        })
        .collect()
}

/// (Δaccuracy, ΔSPD) of zeroing `name`, with Δ = original − zeroed.
fn deltas(report: &AttributionReport, name: &str) -> (f64, f64) {
    let e = report
        .entries_for(MetricKind::Spd)
        .find(|e| e.feature == name)
        .expect("feature present");
    (e.delta_accuracy, e.delta_metric.unwrap_or(f64::NAN))
}

fn count(reports: &[AttributionReport], pred: impl Fn(&AttributionReport) -> bool) -> usize {
    reports.iter().filter(|r| pred(r)).count()
}

fn scenario_one_attribution() -> Outcome {
    let reports = match scenario_reports(1) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    let n = reports.len();
    let acc_ok = count(&reports, |r| r.baseline.accuracy >= 0.85);
    let f2_ok = count(&reports, |r| r.baseline.accuracy - deltas(r, "f2").0 <= 0.60);
    let f1_ok = count(&reports, |r| deltas(r, "f1").1 > 0.0);
    let f3_ok = count(&reports, |r| {
        let (da, ds) = deltas(r, "f3");
        da.abs() < 0.05 && ds.abs() < 0.05
    });
    let f1_detail: Vec<String> = reports.iter().map(|r| format!("{:+.4}", deltas(r, "f1").1)).collect();
    check(
        acc_ok == n && f2_ok == n && f1_ok >= 4 && f3_ok >= 4,
        format!(
            "baseline acc >= 0.85: {acc_ok}/{n}; acc without f2 <= 0.60: {f2_ok}/{n}; \
             SPD drops without f1: {f1_ok}/{n} (need 4, dSPD(f1) = [{}]); f3 negligible: {f3_ok}/{n} (need 4)",
            f1_detail.join(", ")
        ),
    )
}

fn scenario_two_indirect() -> Outcome {
    let reports = match scenario_reports(2) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e),
    };
    let n = reports.len();
    let f2_acc = count(&reports, |r| r.baseline.accuracy - deltas(r, "f2").0 <= 0.70);
    let f2_spd = count(&reports, |r| deltas(r, "f2").1 > 0.0);
    let acc_cmp = count(&reports, |r| deltas(r, "f1").0.abs() < deltas(r, "f2").0.abs());
    let spd_cmp = count(&reports, |r| deltas(r, "f1").1.abs() < deltas(r, "f2").1.abs());
    let f2_detail: Vec<String> = reports.iter().map(|r| format!("{:+.4}", deltas(r, "f2").1)).collect();
    check(
        f2_acc >= 4 && f2_spd >= 4 && acc_cmp >= 4 && spd_cmp >= 4,
        format!(
            "acc without f2 <= 0.70: {f2_acc}/{n}; SPD drops without f2: {f2_spd}/{n} (dSPD(f2) = [{}]); \
             |dacc(f1)| < |dacc(f2)|: {acc_cmp}/{n}; |dSPD(f1)| < |dSPD(f2)|: {spd_cmp}/{n} (need 4 each)",
            f2_detail.join(", ")
        ),
    )
}

fn point(curve: &[(f64, f64, f64)], decay: f64) -> (f64, f64) {
    let p = curve.iter().find(|p| p.0 == decay).expect("decay on grid");
    (p.1, p.2)
}

fn sweep(cfg: &ExperimentConfig) -> fairattn::Result<TradeoffCurve> {
    sweep_tradeoff(&cfg.seeds, &cfg.decays, MetricKind::Spd, cfg.inclusion_threshold, |s| {
        seed_run(cfg, s)
    })
}

fn mitigation_tradeoff() -> Outcome {
    let cfg = scenario_config(1);
    let curve = match sweep(&cfg) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let n = curve.per_seed.len();
    let fairer = curve
        .per_seed
        .iter()
        .filter(|s| point(&s.points, 0.0).1 < point(&s.points, 1.0).1)
        .count();
    let loss: f64 = curve
        .per_seed
        .iter()
        .map(|s| point(&s.points, 1.0).0 - point(&s.points, 0.0).0)
        .sum::<f64>()
        / n as f64;
    let sets: Vec<String> = curve
        .per_seed
        .iter()
        .map(|s| format!("{{{}}}", s.unfair.names.join(",")))
        .collect();
    check(
        fairer >= 4 && loss <= 0.10 && curve.failed_seeds.is_empty(),
        format!(
            "SPD at d_r=0 below baseline: {fairer}/{n} (need 4); mean accuracy loss {loss:.4} (<= 0.10); \
             unfair sets {}",
            sets.join(" ")
        ),
    )
}

fn adult_path() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("FAIRATTN_ADULT_CSV").map(PathBuf::from),
        Some(Path::new(env!("CARGO_MANIFEST_DIR")).join("data/adult.data")),
    ];
    candidates.into_iter().flatten().find(|p| p.is_file())
}

fn adult_tradeoff() -> Outcome {
    let Some(path) = adult_path() else {
        return Outcome::Skip("dataset unavailable (set FAIRATTN_ADULT_CSV or add crates/core/data/adult.data)".into());
    };
    let cfg = ExperimentConfig {
        source: DataSource::Csv {
            path: path.clone(),
            schema: Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/adult.toml"),
        },
        ..ExperimentConfig::default()
    };
    let curve = match sweep(&cfg) {
        Ok(c) => c,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let best = curve
        .points
        .iter()
        .filter(|p| p.metric_mean <= 0.05)
        .map(|p| (p.accuracy_mean, p.decay))
        .fold(None, |acc: Option<(f64, f64)>, p| Some(acc.map_or(p, |a| if p.0 > a.0 { p } else { a })));
    let base = curve.baseline().map(|b| (b.accuracy_mean, b.metric_mean));
    check(
        best.is_some_and(|(acc, _)| acc >= 0.74),
        format!(
            "{}: baseline (acc, SPD) = {base:?}; best point with SPD <= 0.05 (acc, d_r) = {best:?} (need acc >= 0.74)",
            path.display()
        ),
    )
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let total = 1000;
    for _ in 0..total {
        let l = rng.random_range(2..=9);
        let n = rng.random_range(0..80);
        let y_hat: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let y: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let a: Vec<usize> = (0..n).map(|_| rng.random_range(0..l)).collect();
        let gp = GroupedPredictions::new(&y_hat, &y, &a, l).unwrap();
        let all = common::brute_force(&y_hat, &y, &a, l, &|_| true);
        let pos = common::brute_force(&y_hat, &y, &a, l, &|v| v == 1);
        let neg = common::brute_force(&y_hat, &y, &a, l, &|v| v == 0);
        let odd = match (pos, neg) {
            (Some(p), Some(q)) => Some(p.max(q)),
            (p, q) => p.or(q),
        };
        if spd(&gp).ok() != all || eqopp(&gp).ok() != pos || eqodd(&gp).ok() != odd {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{total} instances, {mismatches} mismatches (exact equality)"))
}

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_fairattn"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("FAIRATTN_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if o.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&o.stderr).trim()))
    }
}

/// Every file except the manifest must match byte for byte.
fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        if name == "manifest.json" {
            continue;
        }
        let left = fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let right = fs::read(b.join(&name)).map_err(|e| format!("{}: {e}", name.to_string_lossy()))?;
        if left != right {
            return Err(format!("{} differs", name.to_string_lossy()));
        }
        n += 1;
    }
    Ok(n)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let common_args = ["--scenario", "1", "--n", "4000", "--seeds", "1,2"];
    let jobs: [(&str, &[&str]); 6] = [
        ("gen-data", &["--seed", "3"]),
        ("train", &[]),
        ("attribute", &[]),
        ("mitigate", &[]),
        ("sweep", &["--max-metric", "1"]),
        ("report", &[]),
    ];
    let mut compared = 0;
    for (job, extra) in jobs {
        let first = dir.path().join(format!("{job}-a"));
        let second = dir.path().join(format!("{job}-b"));
        let mut args = vec![job];
        if job == "gen-data" {
            args.extend(["--scenario", "1", "--n", "4000"]);
        } else {
            args.extend(common_args);
        }
        args.extend(extra);
        let manifest = first.join("manifest.json");
        let result = run_cli(&first, &args)
            .and_then(|_| run_cli(&second, &["rerun", manifest.to_str().unwrap()]))
            .and_then(|_| compare_dirs(&first, &second));
        match result {
            Ok(n) => compared += n,
            Err(e) => return Outcome::Fail(format!("{job}: {e}")),
        }
    }
    check(compared > 0, format!("6 jobs rerun from manifests, {compared} output files byte-identical"))
}

fn generator_statistics() -> Outcome {
    use common::{bit, correlation, fraction, num};
    let one = generate_scenario1(100_000, 1).unwrap();
    let n = one.len();
    let p_f1 = fraction(one.rows.iter().filter(|r| bit(&r[0]) == 1).count(), n);
    let p_y = fraction(one.labels.iter().filter(|&&v| v == 1).count(), n);
    let f3: Vec<f64> = one.rows.iter().map(|r| num(&r[2])).collect();
    let ys: Vec<f64> = one.labels.iter().map(|&v| f64::from(v)).collect();
    let corr = correlation(&f3, &ys);

    let two = generate_scenario2(100_000, 1).unwrap();
    let f2_on: Vec<usize> = (0..n).filter(|&i| bit(&two.rows[i][1]) == 1).collect();
    let f1_on: Vec<usize> = (0..n).filter(|&i| bit(&two.rows[i][0]) == 1).collect();
    let p_f1_f2 = fraction(f2_on.iter().filter(|&&i| bit(&two.rows[i][0]) == 1).count(), f2_on.len());
    let p_y_f1 = fraction(f1_on.iter().filter(|&&i| two.labels[i] == 1).count(), f1_on.len());
    let p_f1_two = fraction(f1_on.len(), n);

    let ok = (p_f1 - 0.9).abs() <= 0.01
        && (p_y - 0.5).abs() <= 0.01
        && corr.abs() <= 0.02
        && (p_f1_f2 - 0.9).abs() <= 0.01
        && (p_y_f1 - 0.66).abs() <= 0.01
        && (p_f1_two - 0.5).abs() <= 0.01;
    check(
        ok,
        format!(
            "S1: P(f1=1)={p_f1:.4} P(y=1)={p_y:.4} corr(f3,y)={corr:+.4}; \
             S2: P(f1=1|f2=1)={p_f1_f2:.4} P(y=1|f1=1)={p_y_f1:.4} P(f1=1)={p_f1_two:.4}"
        ),
    )
}

fn main() {
    let criteria = [
        Criterion { id: 1, name: "gradient correctness", budget: Duration::from_secs(60), run: gradient_correctness },
        Criterion { id: 2, name: "scenario 1 attribution", budget: Duration::from_secs(300), run: scenario_one_attribution },
        Criterion { id: 3, name: "scenario 2 indirect discrimination", budget: Duration::from_secs(300), run: scenario_two_indirect },
        Criterion { id: 4, name: "mitigation trade-off", budget: Duration::from_secs(300), run: mitigation_tradeoff },
        Criterion { id: 5, name: "adult trade-off", budget: Duration::from_secs(1800), run: adult_tradeoff },
        Criterion { id: 6, name: "metric oracle equivalence", budget: Duration::from_secs(60), run: metric_oracle },
        Criterion { id: 7, name: "determinism", budget: Duration::from_secs(300), run: determinism },
        Criterion { id: 8, name: "generator statistics", budget: Duration::from_secs(60), run: generator_statistics },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let took = start.elapsed();
        let over = took > c.budget;
        let (tag, detail) = match outcome {
            Outcome::Pass(d) if !over => ("PASS", d),
            Outcome::Pass(d) => ("FAIL", format!("{d}; runtime over budget")),
            Outcome::Fail(d) => ("FAIL", d),
            Outcome::Skip(d) => ("SKIP", d),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!(
            "{tag} [{}] {} ({:.1}s, budget {}s): {detail}",
            c.id,
            c.name,
            took.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
