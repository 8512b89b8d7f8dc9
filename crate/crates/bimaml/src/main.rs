use std::path::PathBuf;
use std::process::ExitCode;

use bimaml::run::{control_learner, run_eval, run_incremental, run_meta_test};
use bimaml::{ExperimentConfig, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "bimaml",
    version,
    about = "Balanced incremental meta-learning experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the task stream and write per-task results.
    Train,
    /// Score a saved checkpoint on the test sets of its learned tasks.
    Eval,
    /// Adapt a saved checkpoint to few-shot episodes of held-out classes.
    Metatest,
    /// Run the naive sequential learner on the same stream.
    Control,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    #[arg(long, global = true)]
    seed_train: Option<u64>,
    /// Output directory for reports and the default checkpoint.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Accuracy threshold of the epochs-to-threshold metric.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    k_per_task: Option<usize>,
    /// Exemplar memory capacity.
    #[arg(long, global = true)]
    memory: Option<usize>,
    /// Training epochs per task, for both learners.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Checkpoint path; defaults to `<out>/checkpoint.bin`.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Any configuration key, as `key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Log progress; repeat for per-epoch detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let mut overrides: Vec<(&str, String)> = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push((k, v));
            }
        };
        push("seed.data", self.seed_data.map(|v| v.to_string()));
        push("seed.init", self.seed_init.map(|v| v.to_string()));
        push("seed.train", self.seed_train.map(|v| v.to_string()));
        push("out", self.out.as_ref().map(|p| p.display().to_string()));
        push("threshold", self.threshold.map(|v| v.to_string()));
        push("k_per_task", self.k_per_task.map(|v| v.to_string()));
        push("memory", self.memory.map(|v| v.to_string()));
        push("meta.epochs", self.epochs.map(|v| v.to_string()));
        push("control.epochs", self.epochs.map(|v| v.to_string()));
        for (k, v) in overrides {
            cfg.set(k, &v)?;
        }
        for kv in &self.sets {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| bimaml::HarnessError::Config {
                    field: kv.clone(),
                    reason: "expected KEY=VALUE".into(),
                })?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg.resolve())
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = cli.common.config()?;
    let checkpoint = cli
        .common
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out_dir.join("checkpoint.bin"));
    let report = match cli.command {
        Command::Train => {
            std::fs::create_dir_all(&cfg.out_dir).map_err(|source| bimaml::HarnessError::Io {
                path: cfg.out_dir.clone(),
                source,
            })?;
            run_incremental(&cfg, Some(&checkpoint))?.report
        }
        Command::Eval => run_eval(&cfg, &checkpoint)?,
        Command::Metatest => run_meta_test(&cfg, &checkpoint)?,
        Command::Control => control_learner(&cfg)?,
    };
    report.write(&cfg.out_dir)?;
    print!("{}", report.summary());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
