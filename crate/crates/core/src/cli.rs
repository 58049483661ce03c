//! Command-line front end. Every command resolves its flags (and an optional
//! TOML experiment config) into a [`Job`] plus [`ExperimentConfig`] and hands
//! them to [`harness::execute`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::fairness::MetricKind;
use crate::harness::{self, DataSource, EvalSplit, ExperimentConfig, Job, RunManifest};

pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const DATA: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const INFEASIBLE: i32 = 5;
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => exit::USAGE,
        Error::Divergence { .. } => exit::DIVERGED,
        Error::Infeasible(_) => exit::INFEASIBLE,
        Error::Io { .. } => exit::IO,
        _ => exit::DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "fairattn", version, about = "Attention-based fairness attribution and bias mitigation")]
pub struct Cli {
    /// Output directory
    #[arg(long, global = true, env = "FAIRATTN_OUT", default_value = "fairattn-out")]
    pub out: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario as CSV
    GenData(Common),
    /// Train one model per seed and save checkpoints
    Train(Common),
    /// Zero each feature's attention and report metric changes
    Attribute {
        #[command(flatten)]
        common: Common,
        /// Use a saved model instead of training
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Decay the attention of unfair features and compare metrics
    Mitigate {
        #[command(flatten)]
        common: Common,
        /// Decay rate in [0, 1)
        #[arg(long, default_value_t = 0.0)]
        decay: f64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sweep decay rates and aggregate accuracy/fairness over seeds
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Pick the most accurate point with mean metric at most this value
        #[arg(long)]
        max_metric: Option<f64>,
    },
    /// Top-k features per fairness metric, averaged over seeds
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
    },
    /// Re-execute the job recorded in a manifest
    Rerun {
        manifest: PathBuf,
    },
}

#[derive(Debug, Args, Default)]
pub struct Common {
    /// TOML experiment config; explicit flags override its values
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Synthetic scenario (1 or 2)
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), conflicts_with = "csv")]
    pub scenario: Option<u8>,
    /// Synthetic sample count
    #[arg(long)]
    pub n: Option<usize>,
    /// CSV data file (requires --schema)
    #[arg(long, requires = "schema")]
    pub csv: Option<PathBuf>,
    /// Dataset schema config (TOML)
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Single seed; shorthand for --seeds <SEED>
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// spd, eqopp or eqodd
    #[arg(long)]
    pub metric: Option<MetricKind>,
    #[arg(long, value_delimiter = ',')]
    pub decays: Option<Vec<f64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Evaluate attribution on the validation split instead of test
    #[arg(long)]
    pub on_val: bool,
}

impl Common {
    pub fn resolve(&self) -> crate::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.csv {
            cfg.source = DataSource::Csv {
                path: path.clone(),
                schema: self.schema.clone().expect("clap enforces --schema"),
            };
        } else if self.scenario.is_some() || self.n.is_some() {
            let (scenario, n) = match cfg.source {
                DataSource::Scenario { scenario, n } => (scenario, n),
                DataSource::Csv { .. } => (1, 10_000),
            };
            cfg.source = DataSource::Scenario {
                scenario: self.scenario.unwrap_or(scenario),
                n: self.n.unwrap_or(n),
            };
        }
        if let Some(seed) = self.seed {
            cfg.seeds = vec![seed];
        }
        if let Some(seeds) = &self.seeds {
            cfg.seeds = seeds.clone();
        }
        if let Some(m) = self.metric {
            cfg.metric = m;
        }
        if let Some(d) = &self.decays {
            cfg.decays = d.clone();
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.lr.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.embed_dim = self.embed_dim.unwrap_or(t.embed_dim);
        t.hidden_dim = self.hidden_dim.unwrap_or(t.hidden_dim);
        t.init_scale = self.init_scale.unwrap_or(t.init_scale);
        if let Some(th) = self.threshold {
            cfg.inclusion_threshold = th;
        }
        if self.on_val {
            cfg.eval_split = EvalSplit::Val;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Command {
    pub fn into_job(self) -> crate::Result<(Job, ExperimentConfig)> {
        Ok(match self {
            Command::GenData(c) => (Job::GenData, c.resolve()?),
            Command::Train(c) => (Job::Train, c.resolve()?),
            Command::Attribute { common, checkpoint } => (Job::Attribute { checkpoint }, common.resolve()?),
            Command::Mitigate {
                common,
                decay,
                checkpoint,
            } => (Job::Mitigate { decay, checkpoint }, common.resolve()?),
            Command::Sweep { common, max_metric } => (Job::Sweep { max_metric }, common.resolve()?),
            Command::Report { common, top_k } => (Job::Report { top_k }, common.resolve()?),
            Command::Rerun { manifest } => {
                let m = RunManifest::load(&manifest)?;
                (m.job, m.config)
            }
        })
    }
}

pub fn run(cli: Cli) -> crate::Result<harness::JobOutput> {
    let out: &Path = &cli.out;
    let (job, cfg) = cli.command.into_job()?;
    harness::execute(&job, &cfg, out)
}

/// Parse arguments, run, print the summary and return the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let out = cli.out.clone();
    match run(cli) {
        Ok(o) => {
            print!("{}", o.summary);
            println!("outputs in {}", out.display());
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_three_is_a_usage_error() {
        let err = Cli::try_parse_from(["fairattn", "gen-data", "--scenario", "3"]).unwrap_err();
        assert!(err.use_stderr());
        assert_eq!(err.exit_code(), exit::USAGE);
    }

    #[test]
    fn flags_override_defaults() {
        let cli = Cli::try_parse_from([
            "fairattn", "sweep", "--scenario", "2", "--n", "500", "--seeds", "3,4", "--metric", "eqodd",
            "--decays", "1,0.5,0",
        ])
        .unwrap();
        let (job, cfg) = cli.command.into_job().unwrap();
        assert_eq!(job, Job::Sweep { max_metric: None });
        assert_eq!(cfg.source, DataSource::Scenario { scenario: 2, n: 500 });
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.metric, MetricKind::EqOdd);
        assert_eq!(cfg.decays, vec![1.0, 0.5, 0.0]);
    }

    #[test]
    fn exit_codes_are_distinct() {
        let codes = [
            exit_code(&Error::Config("x".into())),
            exit_code(&Error::Data("x".into())),
            exit_code(&Error::Divergence { epoch: 1 }),
            exit_code(&Error::Infeasible("x".into())),
        ];
        for (i, a) in codes.iter().enumerate() {
            assert_ne!(*a, exit::OK);
            assert!(codes[i + 1..].iter().all(|b| a != b));
        }
    }
}
