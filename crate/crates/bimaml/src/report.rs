//! Run reports: fixed-header CSV files plus a human-readable summary.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::data::IDX_FILES;
use crate::error::{io_at, Result};
use crate::metrics::EpochsToThreshold;

pub const RESULTS_HEADER: [&str; 6] = [
    "task_index",
    "classes_seen",
    "acc_baseline",
    "acc_finetuned",
    "acc_taskpred",
    "epochs_used",
];
pub const EFFICIENCY_HEADER: [&str; 2] = ["classes_seen", "epochs_to_threshold"];
pub const METATEST_HEADER: [&str; 4] = ["n_way", "k_shot", "episodes", "mean_accuracy"];

/// Accuracies over every class seen so far, recorded after learning `task_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRow {
    pub task_index: usize,
    pub classes_seen: usize,
    pub acc_baseline: f64,
    pub acc_finetuned: f64,
    pub acc_taskpred: f64,
    pub epochs_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    pub classes_seen: usize,
    pub epochs: EpochsToThreshold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaTestRow {
    pub n_way: usize,
    pub k_shot: usize,
    pub episodes: usize,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub rows: Vec<TaskRow>,
    pub efficiency: Vec<EfficiencyRow>,
    pub metatest: Vec<MetaTestRow>,
    /// Baseline accuracy on each task's own test set after the last task.
    pub final_per_task_baseline: Vec<f64>,
    /// Fine-tuned accuracy on each task's own test set after the last task.
    pub final_per_task_finetuned: Vec<f64>,
    pub config_echo: String,
    pub input_hash: String,
}

fn acc(v: f64) -> String {
    format!("{v:.6}")
}

fn spread(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

impl RunReport {
    /// `max − min` of the final per-task baseline accuracies.
    pub fn baseline_spread(&self) -> f64 {
        spread(&self.final_per_task_baseline)
    }

    pub fn results_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RESULTS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.task_index.to_string(),
                r.classes_seen.to_string(),
                acc(r.acc_baseline),
                acc(r.acc_finetuned),
                acc(r.acc_taskpred),
                r.epochs_used.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn efficiency_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EFFICIENCY_HEADER)?;
        for r in &self.efficiency {
            w.write_record([r.classes_seen.to_string(), r.epochs.to_string()])?;
        }
        finish(w)
    }

    pub fn metatest_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(METATEST_HEADER)?;
        for r in &self.metatest {
            w.write_record([
                r.n_way.to_string(),
                r.k_shot.to_string(),
                r.episodes.to_string(),
                acc(r.mean_accuracy),
            ])?;
        }
        finish(w)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input hash: {}", self.input_hash);
        for r in &self.rows {
            let _ = writeln!(
                s,
                "task {:>2} ({:>3} classes): baseline {:.4}  finetuned {:.4}  task prediction {:.4}",
                r.task_index, r.classes_seen, r.acc_baseline, r.acc_finetuned, r.acc_taskpred
            );
        }
        if !self.final_per_task_baseline.is_empty() {
            let fmt = |v: &[f64]| {
                v.iter()
                    .map(|a| format!("{a:.4}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            let _ = writeln!(
                s,
                "final per-task baseline:  {}",
                fmt(&self.final_per_task_baseline)
            );
            let _ = writeln!(
                s,
                "final per-task finetuned: {}",
                fmt(&self.final_per_task_finetuned)
            );
            let _ = writeln!(s, "baseline spread: {:.4}", self.baseline_spread());
        }
        for r in &self.metatest {
            let _ = writeln!(
                s,
                "meta-test {}-way {}-shot over {} episodes: {:.4}",
                r.n_way, r.k_shot, r.episodes, r.mean_accuracy
            );
        }
        let _ = writeln!(s, "\nconfig:\n{}", self.config_echo);
        s
    }

    /// Writes `results.csv`, `efficiency.csv`, `metatest.csv` and `summary.txt`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_at(dir))?;
        for (name, body) in [
            ("results.csv", self.results_csv()?),
            ("efficiency.csv", self.efficiency_csv()?),
            ("metatest.csv", self.metatest_csv()?),
            ("summary.txt", self.summary()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(io_at(path))?;
        }
        Ok(())
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// SHA-256 over the configuration echo and, for IDX datasets, every data
/// file, each framed as a git blob (`blob <len>\0<bytes>`).
pub fn input_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut h = Sha256::new();
    let mut blob = |bytes: &[u8]| {
        h.update(format!("blob {}\0", bytes.len()));
        h.update(bytes);
    };
    blob(cfg.echo().as_bytes());
    if let DatasetSource::Idx(dir) = &cfg.dataset {
        for name in IDX_FILES {
            let path = dir.join(name);
            blob(&std::fs::read(&path).map_err(io_at(path))?);
        }
    }
    Ok(format!("{:x}", h.finalize()))
}
