use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::Task;
use crate::error::Result;
use crate::numkernel::{Batch, Matrix};
use crate::seed;

/// Isotropic Gaussian class clouds, `k_per_task` classes per task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_tasks: usize,
    pub k_per_task: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Standard deviation of each coordinate around the class center.
    pub spread: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_tasks: 3,
            k_per_task: 2,
            dim: 16,
            n_per_class: 100,
            spread: 0.1,
        }
    }
}

/// Training samples per class: 80% of `n`, leaving at least one test sample when `n >= 2`.
fn train_count(n: usize) -> usize {
    let t = (n * 4 + 2) / 5;
    if n >= 2 {
        t.clamp(1, n - 1)
    } else {
        n
    }
}

/// Generates a stream where task `t` owns classes `(t−1)k .. tk`. Class
/// centers are uniform in `[0,1]^dim`; samples are `center + spread·N(0, I)`.
pub fn make_synthetic(cfg: &SyntheticConfig) -> Result<Vec<Task>> {
    let classes = cfg.n_tasks * cfg.k_per_task;
    let mut center_rng = seed::rng(seed::derive(cfg.seed, 0));
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..cfg.dim).map(|_| center_rng.random::<f64>()).collect())
        .collect();

    let n_train = train_count(cfg.n_per_class);
    let mut tasks = Vec::with_capacity(cfg.n_tasks);
    for t in 0..cfg.n_tasks {
        let class_ids: Vec<usize> = (t * cfg.k_per_task..(t + 1) * cfg.k_per_task).collect();
        let mut train = (Matrix::zeros(0, 0), Vec::new());
        let mut test = (Matrix::zeros(0, 0), Vec::new());
        for &c in &class_ids {
            let mut rng = seed::rng(seed::derive(cfg.seed, 1 + c as u64));
            for j in 0..cfg.n_per_class {
                let row: Vec<f64> = centers[c]
                    .iter()
                    .map(|&m| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + cfg.spread * z
                    })
                    .collect();
                let dst = if j < n_train { &mut train } else { &mut test };
                dst.0.push_row(&row)?;
                dst.1.push(c);
            }
        }
        let test = if test.1.is_empty() {
            // a single sample per class cannot be split; evaluate on the training point
            train.clone()
        } else {
            test
        };
        tasks.push(Task {
            index: t + 1,
            classes: class_ids,
            train: Batch::new(train.0, train.1)?,
            test: Batch::new(test.0, test.1)?,
        });
    }
    Ok(tasks)
}
