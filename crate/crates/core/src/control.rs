//! Naive sequential learner: plain mini-batch SGD on each new task alone,
//! with no memory, no meta update and no blending. It serves as the
//! forgetting reference for the balanced learner.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::baseline::EpochRecord;
use crate::error::{Error, Result};
use crate::numkernel::{
    accuracy_among, loss_and_gradient, lr_at, sgd_step_in_place, Batch, LossConfig, NetworkSpec,
    ParamVector, SegmentSet,
};
use crate::seed;
use crate::taskstream::{Task, TaskMeta};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 0.01,
            batch_size: 32,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "control epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "control lr must be positive, got {}",
                self.lr
            )));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    pub learned_tasks: Vec<TaskMeta>,
    pub epoch_log: Vec<Vec<EpochRecord>>,
}

impl ControlState {
    pub fn new(spec: NetworkSpec, init_seed: u64) -> Self {
        Self {
            params: ParamVector::init(&spec, init_seed),
            spec,
            learned_tasks: Vec::new(),
            epoch_log: Vec::new(),
        }
    }

    pub fn learned_classes(&self) -> Vec<usize> {
        self.learned_tasks
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect()
    }
}

/// Trains on `new_task.train` only. `eval` is scored after each epoch over
/// the classes learned so far.
pub fn learn_task_sequential(
    state: &ControlState,
    new_task: &Task,
    cfg: &ControlConfig,
    eval: Option<&Batch>,
) -> Result<ControlState> {
    cfg.validate()?;
    let t = state.learned_tasks.len() + 1;
    if new_task.index != t {
        return Err(Error::Contract(format!(
            "expected task index {t}, got {}",
            new_task.index
        )));
    }
    if let Some(c) = new_task
        .classes
        .iter()
        .find(|&&c| c >= state.spec.output_dim())
    {
        return Err(Error::Contract(format!(
            "class {c} exceeds head width {}",
            state.spec.output_dim()
        )));
    }
    let mut classes_now = state.learned_classes();
    classes_now.extend_from_slice(&new_task.classes);

    let mut params = state.params.clone();
    let mut rng = seed::rng(seed::derive(cfg.seed, t as u64));
    let data = &new_task.train;
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg.lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let mb = data.select(chunk)?;
            let (l, g) = loss_and_gradient(&state.spec, &params, &mb, &cfg.loss, SegmentSet::NONE)?;
            sgd_step_in_place(&mut params, &g, lr)?;
            total += l;
            batches += 1;
        }
        let eval_accuracy = eval
            .map(|b| accuracy_among(&state.spec, &params, b, &classes_now))
            .transpose()?;
        log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: total / batches as f64,
            eval_accuracy,
        });
    }

    let mut learned_tasks = state.learned_tasks.clone();
    learned_tasks.push(new_task.meta());
    let mut epoch_log = state.epoch_log.clone();
    epoch_log.push(log);
    Ok(ControlState {
        spec: state.spec.clone(),
        params,
        learned_tasks,
        epoch_log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskstream::{make_synthetic, SyntheticConfig};

    #[test]
    fn learns_first_task_deterministically() {
        let tasks = make_synthetic(&SyntheticConfig::default()).unwrap();
        let spec = NetworkSpec::mlp(16, alloc::vec![32], 6).unwrap();
        let cfg = ControlConfig {
            epochs: 3,
            lr: 0.1,
            ..Default::default()
        };
        let s0 = ControlState::new(spec, 1);
        let s1 = learn_task_sequential(&s0, &tasks[0], &cfg, Some(&tasks[0].test)).unwrap();
        assert_eq!(s1.learned_classes(), alloc::vec![0, 1]);
        assert_eq!(s1.epoch_log[0].len(), 3);
        assert!(s1.epoch_log[0][2].eval_accuracy.unwrap() > 0.9);
        assert!(learn_task_sequential(&s1, &tasks[2], &cfg, None).is_err());
        assert_eq!(
            s1,
            learn_task_sequential(&s0, &tasks[0], &cfg, Some(&tasks[0].test)).unwrap()
        );
    }
}
