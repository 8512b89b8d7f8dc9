//! Experiment configuration: a flat `key = value` file plus overrides.
//!
//! Every key is optional and has a default. Later assignments win, so CLI
//! overrides are applied after the file. [`ExperimentConfig::echo`] renders
//! the full effective configuration in a canonical order.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bimaml_core::adaption::{AdaptConfig, DEFAULT_TEST_SIZE};
use bimaml_core::baseline::MetaConfig;
use bimaml_core::control::ControlConfig;
use bimaml_core::finetune::FineTuneConfig;
use bimaml_core::rehearsal::DEFAULT_CAPACITY;
use bimaml_core::taskstream::SyntheticConfig;

use crate::data::IDX_FILES;
use crate::error::{config_err, io_at, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    /// Directory holding the four MNIST-layout IDX files.
    Idx(PathBuf),
    /// Generated Gaussian clouds; the generator seed is the data seed.
    Synthetic(SyntheticConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    /// Class order, synthetic data and episode sampling.
    pub data: u64,
    /// Parameter initialization and adaption heads.
    pub init: u64,
    /// Shuffles inside training and fine-tuning.
    pub train: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestSettings {
    pub n_way: usize,
    pub k_shot: usize,
    pub episodes: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub k_per_task: usize,
    /// Highest classes of the class order kept out of training for meta-testing.
    pub held_out_classes: usize,
    /// Shuffle the class order with the data seed instead of ascending ids.
    pub shuffle_classes: bool,
    pub hidden: Vec<usize>,
    pub memory: usize,
    pub meta: MetaConfig,
    pub finetune: FineTuneConfig,
    pub adapt: AdaptConfig,
    pub control: ControlConfig,
    pub metatest: MetaTestSettings,
    pub seeds: Seeds,
    pub threshold: f64,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSource::Idx(PathBuf::from("data/mnist")),
            k_per_task: 2,
            held_out_classes: 0,
            shuffle_classes: false,
            hidden: vec![400, 400, 400],
            memory: DEFAULT_CAPACITY,
            meta: MetaConfig::default(),
            finetune: FineTuneConfig::default(),
            adapt: AdaptConfig::default(),
            control: ControlConfig::default(),
            metatest: MetaTestSettings {
                n_way: 2,
                k_shot: 1,
                episodes: 100,
                test_size: DEFAULT_TEST_SIZE,
            },
            seeds: Seeds {
                data: 0,
                init: 0,
                train: 0,
            },
            threshold: 0.9,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| config_err(key, format!("cannot parse `{value}`")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<usize>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl ExperimentConfig {
    /// Reads `path` on top of the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_at(path))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(&format!("line {}", n + 1), "expected `key = value`"))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    fn synthetic_mut(&mut self, key: &str) -> Result<&mut SyntheticConfig> {
        match &mut self.dataset {
            DatasetSource::Synthetic(s) => Ok(s),
            DatasetSource::Idx(_) => Err(config_err(key, "set `dataset = synthetic` first")),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset" => {
                self.dataset = match value {
                    "synthetic" => DatasetSource::Synthetic(SyntheticConfig {
                        seed: self.seeds.data,
                        ..SyntheticConfig::default()
                    }),
                    "idx" => DatasetSource::Idx(PathBuf::from("data/mnist")),
                    _ => return Err(config_err(key, "expected `idx` or `synthetic`")),
                }
            }
            "idx_dir" => self.dataset = DatasetSource::Idx(PathBuf::from(value)),
            "synthetic.tasks" => self.synthetic_mut(key)?.n_tasks = parse(key, value)?,
            "synthetic.dim" => self.synthetic_mut(key)?.dim = parse(key, value)?,
            "synthetic.per_class" => self.synthetic_mut(key)?.n_per_class = parse(key, value)?,
            "synthetic.spread" => self.synthetic_mut(key)?.spread = parse(key, value)?,
            "k_per_task" => self.k_per_task = parse(key, value)?,
            "held_out_classes" => self.held_out_classes = parse(key, value)?,
            "class_order" => {
                self.shuffle_classes = match value {
                    "natural" => false,
                    "shuffled" => true,
                    _ => return Err(config_err(key, "expected `natural` or `shuffled`")),
                }
            }
            "hidden" => self.hidden = parse_list(key, value)?,
            "memory" => self.memory = parse(key, value)?,
            "meta.epochs" => self.meta.epochs = parse(key, value)?,
            "meta.inner_steps" => self.meta.inner_steps = parse(key, value)?,
            "meta.inner_lr" => self.meta.inner_lr = parse(key, value)?,
            "meta.inner_batch" => {
                self.meta.inner_batch = match value {
                    "full" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "meta.outer_step" => self.meta.outer_step = parse(key, value)?,
            "meta.alpha_scale" => self.meta.alpha_scale = parse(key, value)?,
            "meta.support_fraction" => self.meta.support_fraction = parse(key, value)?,
            "meta.support_lr" => self.meta.support_lr = parse(key, value)?,
            "meta.support_batch" => self.meta.support_batch = parse(key, value)?,
            "loss.gamma" => {
                let gamma = parse(key, value)?;
                self.meta.loss.gamma = gamma;
                self.finetune.loss.gamma = gamma;
                self.adapt.loss.gamma = gamma;
                self.control.loss.gamma = gamma;
            }
            "finetune.epochs" => self.finetune.epochs = parse(key, value)?,
            "finetune.lr" => self.finetune.lr = parse(key, value)?,
            "finetune.batch_size" => self.finetune.batch_size = parse(key, value)?,
            "adapt.steps" => self.adapt.adapt_steps = parse(key, value)?,
            "adapt.lr" => self.adapt.adapt_lr = parse(key, value)?,
            "control.epochs" => self.control.epochs = parse(key, value)?,
            "control.lr" => self.control.lr = parse(key, value)?,
            "control.batch_size" => self.control.batch_size = parse(key, value)?,
            "metatest.n_way" => self.metatest.n_way = parse(key, value)?,
            "metatest.k_shot" => self.metatest.k_shot = parse(key, value)?,
            "metatest.episodes" => self.metatest.episodes = parse(key, value)?,
            "metatest.test_size" => self.metatest.test_size = parse(key, value)?,
            "seed.data" => {
                self.seeds.data = parse(key, value)?;
                if let DatasetSource::Synthetic(s) = &mut self.dataset {
                    s.seed = self.seeds.data;
                }
            }
            "seed.init" => self.seeds.init = parse(key, value)?,
            "seed.train" => self.seeds.train = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "out" => self.out_dir = PathBuf::from(value),
            _ => return Err(config_err(key, "unknown key")),
        }
        Ok(())
    }

    /// Copies the seeds into the component configs. Call after the last `set`.
    pub fn resolve(mut self) -> Self {
        self.meta.seed = self.seeds.train;
        self.finetune.seed = seed_mix(self.seeds.train, 1);
        self.control.seed = self.seeds.train;
        self.adapt.head_seed = self.seeds.init;
        if let DatasetSource::Synthetic(s) = &mut self.dataset {
            s.seed = self.seeds.data;
            s.k_per_task = self.k_per_task;
        }
        self
    }

    /// Checks ranges and that referenced files exist.
    pub fn validate(&self) -> Result<()> {
        if self.k_per_task == 0 {
            return Err(config_err("k_per_task", "must be positive"));
        }
        if self.memory == 0 {
            return Err(config_err("memory", "must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(config_err("threshold", "must be in (0, 1)"));
        }
        if self.hidden.contains(&0) {
            return Err(config_err("hidden", "widths must be positive"));
        }
        let component = |field: &str, r: bimaml_core::Result<()>| {
            r.map_err(|e| config_err(field, e.to_string()))
        };
        component("meta", self.meta.validate())?;
        component("finetune", self.finetune.validate())?;
        component("adapt", self.adapt.validate())?;
        component("control", self.control.validate())?;
        if self.metatest.episodes == 0 {
            return Err(config_err(
                "metatest.episodes",
                "at least one episode is required",
            ));
        }
        match &self.dataset {
            DatasetSource::Idx(dir) => {
                for name in IDX_FILES {
                    if !dir.join(name).is_file() {
                        return Err(config_err(
                            "idx_dir",
                            format!("{} not found", dir.join(name).display()),
                        ));
                    }
                }
            }
            DatasetSource::Synthetic(s) => {
                if s.n_tasks == 0 || s.dim == 0 || s.n_per_class < 2 {
                    return Err(config_err(
                        "synthetic",
                        "need tasks >= 1, dim >= 1 and per_class >= 2",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Every effective setting as sorted `key = value` lines.
    pub fn echo(&self) -> String {
        let mut lines: Vec<String> = Vec::new();
        let mut kv = |k: &str, v: String| lines.push(format!("{k} = {v}"));
        match &self.dataset {
            DatasetSource::Idx(dir) => {
                kv("dataset", "idx".into());
                kv("idx_dir", dir.display().to_string());
            }
            DatasetSource::Synthetic(s) => {
                kv("dataset", "synthetic".into());
                kv("synthetic.tasks", s.n_tasks.to_string());
                kv("synthetic.dim", s.dim.to_string());
                kv("synthetic.per_class", s.n_per_class.to_string());
                kv("synthetic.spread", s.spread.to_string());
            }
        }
        let m = &self.meta;
        kv("k_per_task", self.k_per_task.to_string());
        kv("held_out_classes", self.held_out_classes.to_string());
        kv(
            "class_order",
            if self.shuffle_classes {
                "shuffled"
            } else {
                "natural"
            }
            .into(),
        );
        kv(
            "hidden",
            self.hidden
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv("memory", self.memory.to_string());
        kv("meta.epochs", m.epochs.to_string());
        kv("meta.inner_steps", m.inner_steps.to_string());
        kv("meta.inner_lr", m.inner_lr.to_string());
        kv(
            "meta.inner_batch",
            m.inner_batch.map_or("full".into(), |b| b.to_string()),
        );
        kv("meta.outer_step", m.outer_step.to_string());
        kv("meta.alpha_scale", m.alpha_scale.to_string());
        kv("meta.support_fraction", m.support_fraction.to_string());
        kv("meta.support_lr", m.support_lr.to_string());
        kv("meta.support_batch", m.support_batch.to_string());
        kv("loss.gamma", m.loss.gamma.to_string());
        kv("finetune.epochs", self.finetune.epochs.to_string());
        kv("finetune.lr", self.finetune.lr.to_string());
        kv("finetune.batch_size", self.finetune.batch_size.to_string());
        kv("adapt.steps", self.adapt.adapt_steps.to_string());
        kv("adapt.lr", self.adapt.adapt_lr.to_string());
        kv("control.epochs", self.control.epochs.to_string());
        kv("control.lr", self.control.lr.to_string());
        kv("control.batch_size", self.control.batch_size.to_string());
        kv("metatest.n_way", self.metatest.n_way.to_string());
        kv("metatest.k_shot", self.metatest.k_shot.to_string());
        kv("metatest.episodes", self.metatest.episodes.to_string());
        kv("metatest.test_size", self.metatest.test_size.to_string());
        kv("seed.data", self.seeds.data.to_string());
        kv("seed.init", self.seeds.init.to_string());
        kv("seed.train", self.seeds.train.to_string());
        kv("threshold", self.threshold.to_string());
        kv("out", self.out_dir.display().to_string());
        lines.sort();
        let mut out = String::new();
        for l in lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

fn seed_mix(seed: u64, stream: u64) -> u64 {
    bimaml_core::seed::derive(seed, stream)
}
