//! Class-incremental task streams and balanced support/query splits.

pub mod idx;
mod split;
mod synthetic;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkernel::{Batch, Matrix};
use crate::seed;

pub use split::{split_support_query, SampleRef, SupportQuerySplit, TaskSamples};
pub use synthetic::{make_synthetic, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A labeled dataset with inputs scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Matrix,
    labels: Vec<usize>,
    class_count: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        inputs: Matrix,
        labels: Vec<usize>,
        class_count: usize,
        split: Split,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("dataset has no samples".into()));
        }
        if labels.len() != inputs.rows() {
            return Err(Error::Shape {
                context: "Dataset labels",
                expected: inputs.rows(),
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::Config(format!(
                "label {bad} not below class_count {class_count}"
            )));
        }
        Ok(Self {
            inputs,
            labels,
            class_count,
            split,
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Indices of the samples labeled with any of `classes`, in dataset order.
    pub fn indices_of(&self, classes: &[usize]) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| classes.contains(l))
            .map(|(i, _)| i)
            .collect()
    }

    /// All samples of the given classes as a batch with global labels.
    pub fn batch_of(&self, classes: &[usize]) -> Result<Batch> {
        let idx = self.indices_of(classes);
        if idx.is_empty() {
            return Err(Error::Config(format!("no samples for classes {classes:?}")));
        }
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Batch::new(self.inputs.select_rows(&idx), labels)
    }
}

/// Metadata of one increment: its 1-based index and class ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskMeta {
    pub index: usize,
    pub classes: Vec<usize>,
}

/// One increment of a class-incremental stream. Batch labels are global class ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub index: usize,
    pub classes: Vec<usize>,
    pub train: Batch,
    pub test: Batch,
}

impl Task {
    pub fn meta(&self) -> TaskMeta {
        TaskMeta {
            index: self.index,
            classes: self.classes.clone(),
        }
    }
}

/// How classes are ordered before being chunked into tasks.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum ClassOrder {
    #[default]
    Natural,
    Shuffled(u64),
}

impl ClassOrder {
    pub fn apply(&self, class_count: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..class_count).collect();
        if let ClassOrder::Shuffled(s) = self {
            order.shuffle(&mut seed::rng(*s));
        }
        order
    }
}

/// Chunks `classes` into consecutive tasks of `k` classes each.
pub fn tasks_from_classes(
    train: &Dataset,
    test: &Dataset,
    classes: &[usize],
    k_per_task: usize,
) -> Result<Vec<Task>> {
    if k_per_task == 0 || classes.is_empty() || !classes.len().is_multiple_of(k_per_task) {
        return Err(Error::Config(format!(
            "{} classes cannot be split into tasks of {k_per_task}",
            classes.len()
        )));
    }
    classes
        .chunks(k_per_task)
        .enumerate()
        .map(|(i, chunk)| {
            Ok(Task {
                index: i + 1,
                classes: chunk.to_vec(),
                train: train.batch_of(chunk)?,
                test: test.batch_of(chunk)?,
            })
        })
        .collect()
}

/// Orders every dataset class and chunks the order into tasks of `k_per_task`.
pub fn split_tasks(
    train: &Dataset,
    test: &Dataset,
    k_per_task: usize,
    order: &ClassOrder,
) -> Result<Vec<Task>> {
    if train.class_count() != test.class_count() {
        return Err(Error::Config(format!(
            "train has {} classes, test has {}",
            train.class_count(),
            test.class_count()
        )));
    }
    let classes = order.apply(train.class_count());
    tasks_from_classes(train, test, &classes, k_per_task)
}
