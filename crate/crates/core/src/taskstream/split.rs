use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkernel::Batch;
use crate::seed;

/// Samples of one task inside a training pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSamples {
    pub task: usize,
    pub batch: Batch,
}

/// Identity of a pool sample: position of its task in the pool and row within that batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleRef {
    pub task_pos: usize,
    pub row: usize,
}

/// Disjoint support and query parts of a pool.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportQuerySplit {
    pub support: Batch,
    /// Task index of each support row.
    pub support_tasks: Vec<usize>,
    pub support_origin: Vec<SampleRef>,
    /// One batch per task that kept at least one sample for the query side.
    pub query: Vec<TaskSamples>,
    pub query_origin: Vec<Vec<SampleRef>>,
}

/// Splits `even_total` into `parts` counts differing by at most one, larger counts first.
fn even_shares(even_total: usize, parts: usize) -> impl Iterator<Item = usize> {
    let base = even_total / parts;
    let extra = even_total % parts;
    (0..parts).map(move |i| base + usize::from(i < extra))
}

/// Draws a task-balanced support set and groups the rest into per-task query batches.
///
/// The support budget `round(fraction · |pool|)` is shared evenly across
/// tasks, and every share is capped at `⌈fraction · available⌉` of the
/// smallest task (at least one sample). Per-task support counts therefore
/// differ by at most one, and small (memory) tasks keep query samples of
/// their own.
pub fn split_support_query(
    pool: &[TaskSamples],
    support_fraction: f64,
    seed_value: u64,
) -> Result<SupportQuerySplit> {
    if pool.is_empty() {
        return Err(Error::Config("empty training pool".into()));
    }
    if !(support_fraction > 0.0 && support_fraction < 1.0) {
        return Err(Error::Config(format!(
            "support_fraction must be in (0,1), got {support_fraction}"
        )));
    }
    let total: usize = pool.iter().map(|t| t.batch.len()).sum();
    let budget = libm::round(support_fraction * total as f64) as usize;
    let smallest = pool.iter().map(|t| t.batch.len()).min().unwrap_or(0);
    let cap = (libm::ceil(support_fraction * smallest as f64) as usize).max(1);

    let mut support_origin = Vec::new();
    let mut query_origin = Vec::new();
    for ((pos, task), share) in pool.iter().enumerate().zip(even_shares(budget, pool.len())) {
        let avail = task.batch.len();
        if avail == 0 {
            return Err(Error::Config(format!(
                "task {} has no samples in pool",
                task.task
            )));
        }
        let take = share.min(cap).max(1).min(avail);
        let mut rows: Vec<usize> = (0..avail).collect();
        rows.shuffle(&mut seed::rng(seed::derive(seed_value, pos as u64)));
        support_origin.extend(
            rows[..take]
                .iter()
                .map(|&row| SampleRef { task_pos: pos, row }),
        );
        query_origin.push(
            rows[take..]
                .iter()
                .map(|&row| SampleRef { task_pos: pos, row })
                .collect::<Vec<_>>(),
        );
    }

    support_origin.shuffle(&mut seed::rng(seed::derive(seed_value, u64::MAX)));
    let support = gather(pool, &support_origin)?;
    let support_tasks = support_origin
        .iter()
        .map(|r| pool[r.task_pos].task)
        .collect();
    let mut query = Vec::new();
    let mut kept_origin = Vec::new();
    for refs in query_origin {
        if let Some(first) = refs.first() {
            let pos = first.task_pos;
            let rows: Vec<usize> = refs.iter().map(|r| r.row).collect();
            query.push(TaskSamples {
                task: pool[pos].task,
                batch: pool[pos].batch.select(&rows)?,
            });
            kept_origin.push(refs);
        }
    }
    Ok(SupportQuerySplit {
        support,
        support_tasks,
        support_origin,
        query,
        query_origin: kept_origin,
    })
}

fn gather(pool: &[TaskSamples], refs: &[SampleRef]) -> Result<Batch> {
    let mut inputs = crate::numkernel::Matrix::zeros(0, 0);
    let mut labels = Vec::with_capacity(refs.len());
    for r in refs {
        let b = &pool[r.task_pos].batch;
        inputs.push_row(b.inputs().row(r.row))?;
        labels.push(b.labels()[r.row]);
    }
    Batch::new(inputs, labels)
}
