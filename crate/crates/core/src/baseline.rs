//! Balanced incremental training of the baseline model.
//!
//! Each increment pools the memory exemplars with the new task's training
//! samples and splits the pool into a task-balanced support set and per-task
//! query batches. Every epoch first trains the feature extractor on the
//! support set with the classifier frozen, then runs meta iterations: one
//! inner SGD trajectory per task from the same starting point, followed by a
//! step toward the average endpoint so every task weighs the same regardless
//! of its sample count. After the last epoch the parameters are blended with
//! those of the previous increment and the memory is rebalanced.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::numkernel::{
    accuracy_among, loss_and_gradient, lr_at, sgd_step_in_place, Batch, LossConfig, NetworkSpec,
    ParamVector, SegmentSet,
};
use crate::rehearsal::{update_memory, MemorySet};
use crate::seed;
use crate::taskstream::{split_support_query, Task, TaskMeta, TaskSamples};

// sub-stream tags for seed::derive
const STREAM_SPLIT: u64 = 1;
const STREAM_SUPPORT: u64 = 2;
const STREAM_META: u64 = 3;
const STREAM_MEMORY: u64 = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct MetaConfig {
    /// SGD steps of each per-task inner loop.
    pub inner_steps: usize,
    pub inner_lr: f64,
    /// Outer step size ε toward the mean endpoint.
    pub outer_step: f64,
    /// Epochs per task.
    pub epochs: usize,
    /// λ in the blending weight `α_t = λ(t−1)/t`.
    pub alpha_scale: f64,
    pub support_fraction: f64,
    /// Base learning rate of the support phase, decayed by `lr_at`.
    pub support_lr: f64,
    /// Mini-batch size of the support phase.
    pub support_batch: usize,
    /// Mini-batch size of the inner loops; `None` uses the whole task batch.
    pub inner_batch: Option<usize>,
    pub loss: LossConfig,
    /// Training seed; every shuffle of an increment derives from it.
    pub seed: u64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            inner_steps: 5,
            inner_lr: 0.1,
            outer_step: 1.0,
            epochs: 5,
            alpha_scale: 0.1,
            support_fraction: 0.5,
            support_lr: 0.1,
            support_batch: 32,
            inner_batch: Some(32),
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl MetaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("invalid MetaConfig: {what}")));
        if self.inner_steps == 0 {
            return bad("inner_steps must be positive");
        }
        if !(self.inner_lr > 0.0 && self.support_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(self.outer_step > 0.0 && self.outer_step <= 1.0) {
            return bad("outer_step must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.alpha_scale) {
            return bad("alpha_scale must be in [0, 1]");
        }
        if !(self.support_fraction > 0.0 && self.support_fraction < 1.0) {
            return bad("support_fraction must be in (0, 1)");
        }
        if self.support_batch == 0 || self.inner_batch == Some(0) {
            return bad("batch sizes must be positive");
        }
        self.loss.validate()
    }
}

/// One line of the per-task training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch within the task.
    pub epoch: usize,
    pub train_loss: f64,
    /// Accuracy on the caller's evaluation batch, over all learned classes.
    pub eval_accuracy: Option<f64>,
}

/// The incrementally trained baseline model and everything it carries between tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub spec: NetworkSpec,
    pub params: ParamVector,
    /// Parameters at the end of the previous increment.
    pub prev_params: ParamVector,
    pub memory: MemorySet,
    pub learned_tasks: Vec<TaskMeta>,
    pub epoch_log: Vec<Vec<EpochRecord>>,
    /// Incremented whenever params or memory change.
    pub revision: u64,
}

impl BaselineState {
    /// Fresh state with Glorot-initialized parameters. The head must already
    /// be as wide as the total number of classes the stream will present.
    pub fn new(spec: NetworkSpec, memory_capacity: usize, init_seed: u64) -> Result<Self> {
        let params = ParamVector::init(&spec, init_seed);
        Ok(Self {
            prev_params: params.clone(),
            params,
            spec,
            memory: MemorySet::new(memory_capacity)?,
            learned_tasks: Vec::new(),
            epoch_log: Vec::new(),
            revision: 0,
        })
    }

    /// Every learned class, in task order.
    pub fn learned_classes(&self) -> Vec<usize> {
        self.learned_tasks
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect()
    }

    pub fn task(&self, index: usize) -> Option<&TaskMeta> {
        self.learned_tasks.iter().find(|t| t.index == index)
    }
}

/// `steps` full-batch SGD steps on the focal loss from `params`, nothing frozen.
pub fn inner_loop(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    steps: usize,
    lr: f64,
    loss: &LossConfig,
) -> Result<ParamVector> {
    let mut p = params.clone();
    for _ in 0..steps {
        let (_, g) = loss_and_gradient(spec, &p, batch, loss, SegmentSet::NONE)?;
        sgd_step_in_place(&mut p, &g, lr)?;
    }
    Ok(p)
}

/// `Φ + ε · (mean(Φ_i) − Φ)`, evaluated as `(1−ε)Φ + ε·mean` so that
/// `ε = 1` returns the mean and `ε = 0` returns `Φ` exactly. The mean is
/// reduced in slice order.
pub fn outer_update(
    params: &ParamVector,
    endpoints: &[ParamVector],
    step: f64,
) -> Result<ParamVector> {
    if endpoints.is_empty() {
        return Err(Error::Contract(
            "outer update needs at least one endpoint".into(),
        ));
    }
    let mut mean = alloc::vec![0.0; params.len()];
    for e in endpoints {
        params.check_layout(e, "outer_update")?;
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    let inv = 1.0 / endpoints.len() as f64;
    let values = params
        .values()
        .iter()
        .zip(mean)
        .map(|(&p, m)| (1.0 - step) * p + step * (m * inv))
        .collect();
    params.with_values(values)
}

/// `α_t = λ(t−1)/t`; returns `(1−α_t)Φ_new + α_t Φ^{t−1}`.
pub fn distill_blend_step(
    new_params: &ParamVector,
    prev_params: &ParamVector,
    t: usize,
    alpha_scale: f64,
) -> Result<ParamVector> {
    if t == 0 {
        return Err(Error::Contract("task index is 1-based".into()));
    }
    let alpha = blend_alpha(t, alpha_scale);
    crate::numkernel::axpy_blend(new_params, prev_params, alpha)
}

pub fn blend_alpha(t: usize, alpha_scale: f64) -> f64 {
    alpha_scale * (t - 1) as f64 / t as f64
}

/// One pass of mini-batch SGD over `data`, with the classifier frozen.
/// Returns the mean mini-batch loss.
fn support_epoch(
    spec: &NetworkSpec,
    params: &mut ParamVector,
    data: &Batch,
    lr: f64,
    batch_size: usize,
    loss: &LossConfig,
    rng: &mut seed::Rng,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(batch_size) {
        let mb = data.select(chunk)?;
        let (l, g) = loss_and_gradient(spec, params, &mb, loss, SegmentSet::CLASSIFIER)?;
        sgd_step_in_place(params, &g, lr)?;
        total += l;
        batches += 1;
    }
    Ok(total / batches as f64)
}

/// Trains the feature extractor on the support set for `epochs` epochs with
/// the classifier frozen; the learning rate follows [`lr_at`].
pub fn train_support_phase(
    state: &BaselineState,
    support: &Batch,
    epochs: usize,
    cfg: &MetaConfig,
) -> Result<ParamVector> {
    let mut params = state.params.clone();
    let mut rng = seed::rng(seed::derive(cfg.seed, STREAM_SUPPORT));
    for epoch in 0..epochs {
        support_epoch(
            &state.spec,
            &mut params,
            support,
            lr_at(epoch, cfg.support_lr),
            cfg.support_batch,
            &cfg.loss,
            &mut rng,
        )?;
    }
    Ok(params)
}

/// Cycles through a task batch in reshuffled passes of fixed-size chunks.
struct Cursor {
    order: Vec<usize>,
    at: usize,
}

impl Cursor {
    fn new(len: usize, rng: &mut seed::Rng) -> Self {
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(rng);
        Self { order, at: 0 }
    }

    fn next(&mut self, size: usize, rng: &mut seed::Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.at + size > self.order.len() {
            self.order.shuffle(rng);
            self.at = 0;
        }
        let out = self.order[self.at..self.at + size].to_vec();
        self.at += size;
        out
    }
}

/// Meta iterations covering the query set once. Returns the mean inner loss.
fn meta_epoch(
    spec: &NetworkSpec,
    params: &mut ParamVector,
    query: &[TaskSamples],
    inner_lr: f64,
    cfg: &MetaConfig,
    rng: &mut seed::Rng,
) -> Result<f64> {
    if query.is_empty() {
        return Err(Error::Contract(
            "meta phase needs at least one task batch".into(),
        ));
    }
    let iterations = match cfg.inner_batch {
        None => 1,
        Some(mb) => {
            let total: usize = query.iter().map(|q| q.batch.len()).sum();
            total.div_ceil(query.len() * cfg.inner_steps * mb).max(1)
        }
    };
    let mut cursors: Vec<Cursor> = query
        .iter()
        .map(|q| Cursor::new(q.batch.len(), rng))
        .collect();
    let mut total_loss = 0.0;
    let mut steps = 0usize;
    for _ in 0..iterations {
        let mut endpoints = Vec::with_capacity(query.len());
        for (q, cursor) in query.iter().zip(&mut cursors) {
            let mut p = params.clone();
            for _ in 0..cfg.inner_steps {
                let mb;
                let batch = match cfg.inner_batch {
                    None => &q.batch,
                    Some(size) => {
                        mb = q.batch.select(&cursor.next(size, rng))?;
                        &mb
                    }
                };
                let (l, g) = loss_and_gradient(spec, &p, batch, &cfg.loss, SegmentSet::NONE)?;
                sgd_step_in_place(&mut p, &g, inner_lr)?;
                total_loss += l;
                steps += 1;
            }
            endpoints.push(p);
        }
        *params = outer_update(params, &endpoints, cfg.outer_step)?;
    }
    Ok(total_loss / steps as f64)
}

/// Runs `cfg.epochs` meta epochs on the per-task query batches.
pub fn meta_phase(
    state: &BaselineState,
    query: &[TaskSamples],
    cfg: &MetaConfig,
) -> Result<ParamVector> {
    let mut params = state.params.clone();
    let mut rng = seed::rng(seed::derive(cfg.seed, STREAM_META));
    for epoch in 0..cfg.epochs {
        let lr = cfg.inner_lr * lr_at(epoch, 1.0);
        meta_epoch(&state.spec, &mut params, query, lr, cfg, &mut rng)?;
    }
    Ok(params)
}

/// Learns one new task. `eval`, when given, is scored after every epoch with
/// the argmax restricted to the classes learned so far (including the new ones).
pub fn learn_task(
    state: &BaselineState,
    new_task: &Task,
    cfg: &MetaConfig,
    eval: Option<&Batch>,
) -> Result<BaselineState> {
    cfg.validate()?;
    let t = state.learned_tasks.len() + 1;
    if new_task.index != t {
        return Err(Error::Contract(format!(
            "expected task index {t}, got {}",
            new_task.index
        )));
    }
    let learned = state.learned_classes();
    for &c in &new_task.classes {
        if learned.contains(&c) {
            return Err(Error::Contract(format!("class {c} was already learned")));
        }
        if c >= state.spec.output_dim() {
            return Err(Error::Contract(format!(
                "class {c} exceeds head width {}",
                state.spec.output_dim()
            )));
        }
    }

    let task_seed = seed::derive(cfg.seed, t as u64);
    let mut pool = state.memory.task_pool()?;
    pool.push(TaskSamples {
        task: t,
        batch: new_task.train.clone(),
    });
    let split = split_support_query(
        &pool,
        cfg.support_fraction,
        seed::derive(task_seed, STREAM_SPLIT),
    )?;

    let mut classes_now = learned;
    classes_now.extend_from_slice(&new_task.classes);
    let mut params = state.params.clone();
    let mut support_rng = seed::rng(seed::derive(task_seed, STREAM_SUPPORT));
    let mut meta_rng = seed::rng(seed::derive(task_seed, STREAM_META));
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let decay = lr_at(epoch, 1.0);
        let support_loss = support_epoch(
            &state.spec,
            &mut params,
            &split.support,
            cfg.support_lr * decay,
            cfg.support_batch,
            &cfg.loss,
            &mut support_rng,
        )?;
        let meta_loss = meta_epoch(
            &state.spec,
            &mut params,
            &split.query,
            cfg.inner_lr * decay,
            cfg,
            &mut meta_rng,
        )?;
        let eval_accuracy = eval
            .map(|b| accuracy_among(&state.spec, &params, b, &classes_now))
            .transpose()?;
        let record = EpochRecord {
            epoch: epoch + 1,
            train_loss: 0.5 * (support_loss + meta_loss),
            eval_accuracy,
        };
        log::debug!(
            "task {t} epoch {}: loss {:.5} acc {:?}",
            record.epoch,
            record.train_loss,
            record.eval_accuracy
        );
        log.push(record);
    }

    let blended = distill_blend_step(&params, &state.prev_params, t, cfg.alpha_scale)?;
    let memory = update_memory(
        &state.memory,
        new_task,
        seed::derive(task_seed, STREAM_MEMORY),
    )?;
    let mut learned_tasks = state.learned_tasks.clone();
    learned_tasks.push(TaskMeta {
        index: t,
        classes: new_task.classes.clone(),
    });
    let mut epoch_log = state.epoch_log.clone();
    epoch_log.push(log);
    Ok(BaselineState {
        spec: state.spec.clone(),
        prev_params: blended.clone(),
        params: blended,
        memory,
        learned_tasks,
        epoch_log,
        revision: state.revision + 1,
    })
}
