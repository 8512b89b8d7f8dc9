//! Incremental testing with task-level prediction and per-task fine-tuning.
//!
//! The baseline picks the task whose classes carry the most probability mass.
//! A copy of the baseline is fine-tuned on that task's memory exemplars, and
//! the two class distributions are summed; the final class is the argmax of
//! the sum among the predicted task's classes.

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::baseline::BaselineState;
use crate::error::{Error, Result};
use crate::numkernel::{
    argmax_among, forward_inputs, loss_and_gradient, sgd_step_in_place, softmax_into, Batch,
    LossConfig, Matrix, NetworkSpec, ParamVector, SegmentSet,
};
use crate::rehearsal::sample_memory;
use crate::seed;
use crate::taskstream::TaskMeta;

/// How the baseline and fine-tuned distributions are merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Combine {
    /// Elementwise sum of the two probability vectors.
    #[default]
    Sum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FineTuneConfig {
    /// Epochs over the task's exemplars.
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub combine: Combine,
    pub loss: LossConfig,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            epochs: 1,
            lr: 0.01,
            batch_size: 32,
            combine: Combine::Sum,
            loss: LossConfig::default(),
            seed: 0,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.batch_size > 0) {
            return Err(Error::Config(format!(
                "fine-tune lr must be positive and batch_size nonzero (lr {}, batch {})",
                self.lr, self.batch_size
            )));
        }
        self.loss.validate()
    }
}

/// Class-level and task-level prediction for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Learned class ids in task order; indexes `class_probs`.
    pub classes: Vec<usize>,
    pub class_probs: Vec<f64>,
    /// Learned task indices; indexes `task_scores`.
    pub tasks: Vec<usize>,
    pub task_scores: Vec<f64>,
    pub predicted_task: usize,
    pub predicted_class: usize,
}

/// Softmax over the logits of `classes` only.
fn probs_over(logits: &[f64], classes: &[usize]) -> Vec<f64> {
    let picked: Vec<f64> = classes.iter().map(|&c| logits[c]).collect();
    let mut out = alloc::vec![0.0; picked.len()];
    softmax_into(&picked, &mut out);
    out
}

/// Sums the class probabilities of each task. Returns `(argmax position, scores)`,
/// ties going to the earliest task.
pub fn task_scores_from(state: &BaselineState, class_probs: &[f64]) -> (usize, Vec<f64>) {
    let mut scores = Vec::with_capacity(state.learned_tasks.len());
    let mut at = 0;
    for task in &state.learned_tasks {
        let k = task.classes.len();
        scores.push(class_probs[at..at + k].iter().sum());
        at += k;
    }
    let positions: Vec<usize> = (0..scores.len()).collect();
    let best = argmax_among(&scores, &positions).unwrap_or(0);
    (best, scores)
}

fn check_learned(state: &BaselineState) -> Result<()> {
    if state.learned_tasks.is_empty() {
        Err(Error::Contract("no task has been learned".into()))
    } else {
        Ok(())
    }
}

fn single_row(state: &BaselineState, x: &[f64]) -> Result<Matrix> {
    if x.len() != state.spec.input_dim() {
        return Err(Error::Shape {
            context: "prediction input",
            expected: state.spec.input_dim(),
            actual: x.len(),
        });
    }
    Matrix::from_vec(1, x.len(), x.to_vec())
}

/// Task whose classes carry the largest summed probability, with all task scores.
pub fn task_level_predict(state: &BaselineState, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    check_learned(state)?;
    let logits = forward_inputs(&state.spec, &state.params, &single_row(state, x)?)?;
    let probs = probs_over(logits.row(0), &state.learned_classes());
    let (pos, scores) = task_scores_from(state, &probs);
    Ok((state.learned_tasks[pos].index, scores))
}

/// Copy of the baseline trained on the memory exemplars of `task`, nothing frozen.
pub fn fine_tune(state: &BaselineState, task: usize, cfg: &FineTuneConfig) -> Result<ParamVector> {
    cfg.validate()?;
    if state.task(task).is_none() {
        return Err(Error::Lookup(format!("task {task} has not been learned")));
    }
    let mut params = state.params.clone();
    let available = state.memory.task_batch(task)?.len();
    for epoch in 0..cfg.epochs {
        let s = seed::derive(seed::derive(cfg.seed, task as u64), epoch as u64);
        let all = sample_memory(&state.memory, task, available, s)?;
        let order: Vec<usize> = (0..all.len()).collect();
        for chunk in order.chunks(cfg.batch_size) {
            let mb = all.select(chunk)?;
            let (_, g) = loss_and_gradient(&state.spec, &params, &mb, &cfg.loss, SegmentSet::NONE)?;
            sgd_step_in_place(&mut params, &g, cfg.lr)?;
        }
    }
    Ok(params)
}

/// Fine-tuned models per task, valid for one baseline revision.
#[derive(Debug, Clone, Default)]
pub struct FineTuneCache {
    revision: Option<u64>,
    models: BTreeMap<usize, ParamVector>,
}

impl FineTuneCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get_or_tune(
        &mut self,
        state: &BaselineState,
        task: usize,
        cfg: &FineTuneConfig,
    ) -> Result<&ParamVector> {
        if self.revision != Some(state.revision) {
            self.models.clear();
            self.revision = Some(state.revision);
        }
        match self.models.entry(task) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => Ok(e.insert(fine_tune(state, task, cfg)?)),
        }
    }
}

fn combine(cfg: &FineTuneConfig, base: &[f64], tuned: &[f64]) -> Vec<f64> {
    match cfg.combine {
        Combine::Sum => base.iter().zip(tuned).map(|(a, b)| a + b).collect(),
    }
}

/// Builds a prediction from baseline and fine-tuned logits of one input.
fn assemble(
    state: &BaselineState,
    classes: &[usize],
    base_logits: &[f64],
    tuned_logits: &[f64],
    task_pos: usize,
    task_scores: Vec<f64>,
    cfg: &FineTuneConfig,
) -> Prediction {
    let p_base = probs_over(base_logits, classes);
    let p_tuned = probs_over(tuned_logits, classes);
    let summed = combine(cfg, &p_base, &p_tuned);
    let start: usize = state.learned_tasks[..task_pos]
        .iter()
        .map(|t| t.classes.len())
        .sum();
    let width = state.learned_tasks[task_pos].classes.len();
    let within: Vec<usize> = (start..start + width).collect();
    let best = argmax_among(&summed, &within).expect("task has classes");
    let norm: f64 = summed.iter().sum();
    Prediction {
        classes: classes.to_vec(),
        class_probs: summed.iter().map(|v| v / norm).collect(),
        tasks: state.learned_tasks.iter().map(|t| t.index).collect(),
        task_scores,
        predicted_task: state.learned_tasks[task_pos].index,
        predicted_class: classes[best],
    }
}

/// Task prediction by the baseline, then the class argmax of the summed
/// baseline and fine-tuned distributions within that task.
pub fn combined_predict(
    state: &BaselineState,
    x: &[f64],
    cfg: &FineTuneConfig,
    cache: &mut FineTuneCache,
) -> Result<Prediction> {
    check_learned(state)?;
    let row = single_row(state, x)?;
    let classes = state.learned_classes();
    let base_logits = forward_inputs(&state.spec, &state.params, &row)?;
    let (pos, scores) = task_scores_from(state, &probs_over(base_logits.row(0), &classes));
    let tuned = cache.get_or_tune(state, state.learned_tasks[pos].index, cfg)?;
    let tuned_logits = forward_inputs(&state.spec, tuned, &row)?;
    Ok(assemble(
        state,
        &classes,
        base_logits.row(0),
        tuned_logits.row(0),
        pos,
        scores,
        cfg,
    ))
}

/// Sum-rule task scores over `tasks` for one logits row. Returns the argmax
/// position (ties to the earliest task).
fn task_position(tasks: &[TaskMeta], classes: &[usize], logits: &[f64]) -> usize {
    let probs = probs_over(logits, classes);
    let mut scores = Vec::with_capacity(tasks.len());
    let mut at = 0;
    for task in tasks {
        let k = task.classes.len();
        scores.push(probs[at..at + k].iter().sum::<f64>());
        at += k;
    }
    let positions: Vec<usize> = (0..scores.len()).collect();
    argmax_among(&scores, &positions).unwrap_or(0)
}

/// Accuracy of a plain model, without fine-tuning, on each task's test set.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineEval {
    /// Argmax over all learned classes, per task.
    pub per_task: Vec<f64>,
    /// Fraction of each task's samples assigned to the right task.
    pub per_task_taskpred: Vec<f64>,
    pub overall: f64,
    pub task_prediction: f64,
}

fn check_test_sets(tasks: &[TaskMeta], test_sets: &[Batch]) -> Result<()> {
    if tasks.is_empty() {
        return Err(Error::Contract("no task has been learned".into()));
    }
    if test_sets.is_empty() {
        return Err(Error::Config("empty test set".into()));
    }
    if test_sets.len() != tasks.len() {
        return Err(Error::Shape {
            context: "test sets per learned task",
            expected: tasks.len(),
            actual: test_sets.len(),
        });
    }
    Ok(())
}

/// Scores any network on the learned tasks. `test_sets[i]` belongs to `tasks[i]`.
pub fn baseline_eval(
    spec: &NetworkSpec,
    params: &ParamVector,
    tasks: &[TaskMeta],
    test_sets: &[Batch],
) -> Result<BaselineEval> {
    check_test_sets(tasks, test_sets)?;
    let classes: Vec<usize> = tasks
        .iter()
        .flat_map(|t| t.classes.iter().copied())
        .collect();
    let mut per_task = Vec::with_capacity(tasks.len());
    let mut per_task_taskpred = Vec::with_capacity(tasks.len());
    let (mut hits, mut task_hits, mut total) = (0usize, 0usize, 0usize);
    for (true_pos, batch) in test_sets.iter().enumerate() {
        let logits = forward_inputs(spec, params, batch.inputs())?;
        let (mut h, mut th) = (0usize, 0usize);
        for (i, &label) in batch.labels().iter().enumerate() {
            let row = logits.row(i);
            h += usize::from(argmax_among(row, &classes) == Some(label));
            th += usize::from(task_position(tasks, &classes, row) == true_pos);
        }
        per_task.push(h as f64 / batch.len() as f64);
        per_task_taskpred.push(th as f64 / batch.len() as f64);
        hits += h;
        task_hits += th;
        total += batch.len();
    }
    Ok(BaselineEval {
        per_task,
        per_task_taskpred,
        overall: hits as f64 / total as f64,
        task_prediction: task_hits as f64 / total as f64,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalResult {
    /// Combined (fine-tuned) accuracy per learned task.
    pub per_task: Vec<f64>,
    pub overall: f64,
    /// The same test sets scored by the baseline alone.
    pub baseline: BaselineEval,
}

/// Scores every learned task's test set with [`combined_predict`] semantics.
/// `test_sets[i]` belongs to the i-th learned task.
pub fn incremental_test(
    state: &BaselineState,
    test_sets: &[Batch],
    cfg: &FineTuneConfig,
    cache: &mut FineTuneCache,
) -> Result<IncrementalResult> {
    let baseline = baseline_eval(&state.spec, &state.params, &state.learned_tasks, test_sets)?;
    let classes = state.learned_classes();
    let mut per_task = Vec::with_capacity(test_sets.len());
    let (mut correct, mut total) = (0usize, 0usize);
    for batch in test_sets {
        let base_logits = forward_inputs(&state.spec, &state.params, batch.inputs())?;
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..batch.len() {
            let pos = task_position(&state.learned_tasks, &classes, base_logits.row(i));
            groups.entry(pos).or_default().push(i);
        }
        let mut hits = 0;
        for (pos, rows) in groups {
            let tuned = cache.get_or_tune(state, state.learned_tasks[pos].index, cfg)?;
            let tuned_logits =
                forward_inputs(&state.spec, tuned, &batch.inputs().select_rows(&rows))?;
            for (j, &i) in rows.iter().enumerate() {
                let pred = assemble(
                    state,
                    &classes,
                    base_logits.row(i),
                    tuned_logits.row(j),
                    pos,
                    Vec::new(),
                    cfg,
                );
                hits += usize::from(pred.predicted_class == batch.labels()[i]);
            }
        }
        per_task.push(hits as f64 / batch.len() as f64);
        correct += hits;
        total += batch.len();
    }
    Ok(IncrementalResult {
        per_task,
        overall: correct as f64 / total as f64,
        baseline,
    })
}
