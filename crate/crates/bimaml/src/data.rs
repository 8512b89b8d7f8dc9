//! Dataset loading and stream construction.

use std::path::Path;

use bimaml_core::numkernel::Batch;
use bimaml_core::taskstream::idx::dataset_from_idx;
use bimaml_core::taskstream::{
    make_synthetic, tasks_from_classes, ClassOrder, Dataset, Split, Task,
};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::error::{config_err, io_at, Result};

/// Train images, train labels, test images, test labels.
pub const IDX_FILES: [&str; 4] = [
    "train-images-idx3-ubyte",
    "train-labels-idx1-ubyte",
    "t10k-images-idx3-ubyte",
    "t10k-labels-idx1-ubyte",
];

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    std::fs::read(&path).map_err(io_at(path))
}

/// Loads the train and test splits from the four IDX files in `dir`.
pub fn load_idx(dir: &Path) -> Result<(Dataset, Dataset)> {
    let [tr_x, tr_y, te_x, te_y] = IDX_FILES.map(|n| read(dir, n));
    let train = dataset_from_idx(&tr_x?, &tr_y?, Split::Train)?;
    let test = dataset_from_idx(&te_x?, &te_y?, Split::Test)?;
    Ok((train, test))
}

/// The tasks to learn plus the samples reserved for meta-testing.
#[derive(Debug, Clone)]
pub struct Stream {
    pub tasks: Vec<Task>,
    /// Samples of the held-out classes with global labels, if any are held out.
    pub held_out: Option<Batch>,
    /// Width of the network head.
    pub class_count: usize,
    pub input_dim: usize,
}

impl Stream {
    /// All test samples of tasks `1..=t`, concatenated.
    pub fn test_union(&self, t: usize) -> Result<Batch> {
        Ok(Batch::concat(
            self.tasks[..t].iter().map(|task| &task.test),
        )?)
    }
}

pub fn build_stream(cfg: &ExperimentConfig) -> Result<Stream> {
    let k = cfg.k_per_task;
    match &cfg.dataset {
        DatasetSource::Idx(dir) => {
            let (train, test) = load_idx(dir)?;
            let order = if cfg.shuffle_classes {
                ClassOrder::Shuffled(cfg.seeds.data)
            } else {
                ClassOrder::Natural
            };
            let classes = order.apply(train.class_count());
            if cfg.held_out_classes >= classes.len() {
                return Err(config_err(
                    "held_out_classes",
                    "must leave at least one class to learn",
                ));
            }
            let (learn, held) = classes.split_at(classes.len() - cfg.held_out_classes);
            let tasks = tasks_from_classes(&train, &test, learn, k)
                .map_err(|e| config_err("k_per_task", e.to_string()))?;
            let held_out = if held.is_empty() {
                None
            } else {
                Some(train.batch_of(held)?)
            };
            Ok(Stream {
                tasks,
                held_out,
                class_count: train.class_count(),
                input_dim: train.dim(),
            })
        }
        DatasetSource::Synthetic(s) => {
            if !cfg.held_out_classes.is_multiple_of(k) {
                return Err(config_err(
                    "held_out_classes",
                    "must be a multiple of k_per_task for synthetic streams",
                ));
            }
            let extra = cfg.held_out_classes / k;
            let mut gen = s.clone();
            gen.k_per_task = k;
            gen.n_tasks = s.n_tasks + extra;
            let mut tasks = make_synthetic(&gen)?;
            let held: Vec<Task> = tasks.split_off(s.n_tasks);
            let held_out = if held.is_empty() {
                None
            } else {
                Some(Batch::concat(
                    held.iter().flat_map(|t| [&t.train, &t.test]),
                )?)
            };
            Ok(Stream {
                tasks,
                held_out,
                class_count: gen.n_tasks * k,
                input_dim: s.dim,
            })
        }
    }
}
