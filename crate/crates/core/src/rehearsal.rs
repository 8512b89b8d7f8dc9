//! Constant-capacity exemplar memory.
//!
//! Every stored class gets an equal quota of `⌊capacity / classes⌋`
//! exemplars, with the remainder going to the lowest class ids. Exemplars of
//! a class are drawn once, in a seeded random order, when the class is first
//! stored; later updates only truncate that order, so history is never
//! resampled.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkernel::{Batch, Matrix};
use crate::seed;
use crate::taskstream::{Task, TaskSamples};

/// Default exemplar capacity.
pub const DEFAULT_CAPACITY: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct MemorySet {
    capacity: usize,
    store: BTreeMap<usize, Matrix>,
    task_of_class: BTreeMap<usize, usize>,
}

impl MemorySet {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("memory capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            store: BTreeMap::new(),
            task_of_class: BTreeMap::new(),
        })
    }

    /// Rebuilds a memory from its parts, checking the structural invariants.
    pub fn from_parts(
        capacity: usize,
        store: BTreeMap<usize, Matrix>,
        task_of_class: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        let mem = Self {
            capacity,
            store,
            task_of_class,
        };
        if capacity == 0 || mem.len() > capacity || !mem.store.keys().eq(mem.task_of_class.keys()) {
            return Err(Error::Contract("inconsistent memory snapshot".into()));
        }
        Ok(mem)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of stored exemplars.
    pub fn len(&self) -> usize {
        self.store.values().map(Matrix::rows).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.store.keys().copied()
    }

    pub fn class_count(&self, class: usize) -> usize {
        self.store.get(&class).map_or(0, Matrix::rows)
    }

    pub fn exemplars(&self, class: usize) -> Option<&Matrix> {
        self.store.get(&class)
    }

    pub fn task_of_class(&self) -> &BTreeMap<usize, usize> {
        &self.task_of_class
    }

    pub fn store(&self) -> &BTreeMap<usize, Matrix> {
        &self.store
    }

    /// Classes of `task`, ascending.
    pub fn classes_of_task(&self, task: usize) -> Vec<usize> {
        self.task_of_class
            .iter()
            .filter(|(_, &t)| t == task)
            .map(|(&c, _)| c)
            .collect()
    }

    /// Learned task indices, ascending.
    pub fn tasks(&self) -> Vec<usize> {
        let mut t: Vec<usize> = self.task_of_class.values().copied().collect();
        t.sort_unstable();
        t.dedup();
        t
    }

    /// Every exemplar of `task` as one batch, classes ascending.
    pub fn task_batch(&self, task: usize) -> Result<Batch> {
        let classes = self.classes_of_task(task);
        if classes.is_empty() {
            return Err(Error::Lookup(format!("task {task} not in memory")));
        }
        let mut inputs = Matrix::zeros(0, 0);
        let mut labels = Vec::new();
        for c in classes {
            for row in self.store[&c].iter_rows() {
                inputs.push_row(row)?;
                labels.push(c);
            }
        }
        Batch::new(inputs, labels)
    }

    /// The memory grouped per task, ascending task index.
    pub fn task_pool(&self) -> Result<Vec<TaskSamples>> {
        self.tasks()
            .into_iter()
            .filter(|&t| {
                self.classes_of_task(t)
                    .iter()
                    .any(|c| self.class_count(*c) > 0)
            })
            .map(|t| {
                Ok(TaskSamples {
                    task: t,
                    batch: self.task_batch(t)?,
                })
            })
            .collect()
    }

    fn quota(&self, class_rank: usize, classes: usize) -> usize {
        self.capacity / classes + usize::from(class_rank < self.capacity % classes)
    }
}

/// Adds the classes of `new_task` and rebalances every class to its quota.
pub fn update_memory(prev: &MemorySet, new_task: &Task, seed_value: u64) -> Result<MemorySet> {
    if let Some(c) = new_task.classes.iter().find(|c| prev.store.contains_key(c)) {
        return Err(Error::Contract(format!("class {c} is already stored")));
    }
    let mut classes: Vec<usize> = prev
        .store
        .keys()
        .copied()
        .chain(new_task.classes.iter().copied())
        .collect();
    classes.sort_unstable();
    classes.dedup();
    if prev.capacity < classes.len() {
        return Err(Error::Config(format!(
            "capacity {} cannot hold one exemplar for each of {} classes",
            prev.capacity,
            classes.len()
        )));
    }

    let mut next = prev.clone();
    for (rank, &class) in classes.iter().enumerate() {
        let quota = next.quota(rank, classes.len());
        if let Some(rows) = next.store.get_mut(&class) {
            rows.truncate_rows(quota);
            continue;
        }
        let mut idx: Vec<usize> = new_task
            .train
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut seed::rng(seed::derive(seed_value, class as u64)));
        idx.truncate(quota);
        next.store
            .insert(class, new_task.train.inputs().select_rows(&idx));
        next.task_of_class.insert(class, new_task.index);
    }
    Ok(next)
}

/// A batch from the exemplars of `task`, spread over its classes as evenly
/// as their counts allow. Asking for more than is stored returns everything.
pub fn sample_memory(
    mem: &MemorySet,
    task: usize,
    batch_size: usize,
    seed_value: u64,
) -> Result<Batch> {
    if batch_size == 0 {
        return Err(Error::Contract("batch_size must be positive".into()));
    }
    let classes = mem.classes_of_task(task);
    if classes.is_empty() {
        return Err(Error::Lookup(format!("task {task} not in memory")));
    }
    let counts: Vec<usize> = classes.iter().map(|&c| mem.class_count(c)).collect();
    let alloc = water_fill(&counts, batch_size);

    let mut rng = seed::rng(seed_value);
    let mut inputs = Matrix::zeros(0, 0);
    let mut labels = Vec::new();
    for ((&class, &count), &take) in classes.iter().zip(&counts).zip(&alloc) {
        let mut idx: Vec<usize> = (0..count).collect();
        idx.shuffle(&mut rng);
        for &i in &idx[..take] {
            inputs.push_row(mem.store[&class].row(i))?;
            labels.push(class);
        }
    }
    let batch = Batch::new(inputs, labels)?;
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.shuffle(&mut rng);
    batch.select(&order)
}

/// Allocates `total` draws over bins with the given capacities, as evenly as possible.
fn water_fill(caps: &[usize], total: usize) -> Vec<usize> {
    let mut alloc = alloc::vec![0; caps.len()];
    let mut left = total.min(caps.iter().sum());
    while left > 0 {
        let open: Vec<usize> = (0..caps.len()).filter(|&i| alloc[i] < caps[i]).collect();
        let share = (left / open.len()).max(1);
        for &i in &open {
            if left == 0 {
                break;
            }
            let add = share.min(caps[i] - alloc[i]).min(left);
            alloc[i] += add;
            left -= add;
        }
    }
    alloc
}
