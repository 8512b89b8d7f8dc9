//! Experiment orchestration.

use std::path::Path;

use bimaml_core::adaption::{make_episodes, meta_test, BaseModel, MetaTestResult};
use bimaml_core::baseline::{learn_task, BaselineState, EpochRecord};
use bimaml_core::control::{learn_task_sequential, ControlState};
use bimaml_core::finetune::{baseline_eval, incremental_test, FineTuneCache};
use bimaml_core::numkernel::{Batch, NetworkSpec};
use bimaml_core::seed;

use crate::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use crate::config::ExperimentConfig;
use crate::data::{build_stream, Stream};
use crate::error::{config_err, HarnessError, Result};
use crate::metrics::{epochs_to_accuracy, EPOCH_CAP};
use crate::report::{input_hash, EfficiencyRow, MetaTestRow, RunReport, TaskRow};

const STREAM_EPISODES: u64 = 7;

pub fn network_spec(cfg: &ExperimentConfig, stream: &Stream) -> Result<NetworkSpec> {
    Ok(NetworkSpec::mlp(
        stream.input_dim,
        cfg.hidden.clone(),
        stream.class_count,
    )?)
}

fn test_sets(stream: &Stream, t: usize) -> Vec<Batch> {
    stream.tasks[..t]
        .iter()
        .map(|task| task.test.clone())
        .collect()
}

fn efficiency(log: &[EpochRecord], classes_seen: usize, threshold: f64) -> EfficiencyRow {
    let curve: Vec<f64> = log.iter().filter_map(|r| r.eval_accuracy).collect();
    EfficiencyRow {
        classes_seen,
        epochs: epochs_to_accuracy(&curve, threshold, EPOCH_CAP),
    }
}

fn new_report(cfg: &ExperimentConfig) -> Result<RunReport> {
    Ok(RunReport {
        config_echo: cfg.echo(),
        input_hash: input_hash(cfg)?,
        ..Default::default()
    })
}

/// Final state and report of an incremental run.
#[derive(Debug, Clone)]
pub struct IncrementalRun {
    pub state: BaselineState,
    pub report: RunReport,
}

/// Learns every task of the stream in order, scoring all seen tasks after
/// each increment. With `checkpoint` set, the state is saved after every
/// task, so a failure mid-run leaves the last good increment on disk.
pub fn run_incremental(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<IncrementalRun> {
    cfg.validate()?;
    let stream = build_stream(cfg)?;
    let mut report = new_report(cfg)?;
    let mut state = BaselineState::new(network_spec(cfg, &stream)?, cfg.memory, cfg.seeds.init)?;
    let mut cache = FineTuneCache::new();
    let mut classes_seen = 0;
    for (i, task) in stream.tasks.iter().enumerate() {
        let t = i + 1;
        classes_seen += task.classes.len();
        let eval = stream.test_union(t)?;
        state = learn_task(&state, task, &cfg.meta, Some(&eval))?;
        if let Some(path) = checkpoint {
            let ck = Checkpoint {
                config_hash: report.input_hash.clone(),
                state: state.clone(),
            };
            save_checkpoint(&ck, path)?;
        }
        let res = incremental_test(&state, &test_sets(&stream, t), &cfg.finetune, &mut cache)?;
        log::info!(
            "task {t}: baseline {:.4} finetuned {:.4} task prediction {:.4}",
            res.baseline.overall,
            res.overall,
            res.baseline.task_prediction
        );
        report.rows.push(TaskRow {
            task_index: t,
            classes_seen,
            acc_baseline: res.baseline.overall,
            acc_finetuned: res.overall,
            acc_taskpred: res.baseline.task_prediction,
            epochs_used: cfg.meta.epochs,
        });
        let log = state.epoch_log.last().map_or(&[][..], Vec::as_slice);
        report
            .efficiency
            .push(efficiency(log, classes_seen, cfg.threshold));
        report.final_per_task_baseline = res.baseline.per_task;
        report.final_per_task_finetuned = res.per_task;
    }
    Ok(IncrementalRun { state, report })
}

/// Same protocol as [`run_incremental`] with the naive sequential learner.
/// It has no fine-tuning stage, so its fine-tuned column repeats the baseline.
pub fn control_learner(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let stream = build_stream(cfg)?;
    let mut report = new_report(cfg)?;
    let mut state = ControlState::new(network_spec(cfg, &stream)?, cfg.seeds.init);
    let mut classes_seen = 0;
    for (i, task) in stream.tasks.iter().enumerate() {
        let t = i + 1;
        classes_seen += task.classes.len();
        let eval = stream.test_union(t)?;
        state = learn_task_sequential(&state, task, &cfg.control, Some(&eval))?;
        let res = baseline_eval(
            &state.spec,
            &state.params,
            &state.learned_tasks,
            &test_sets(&stream, t),
        )?;
        report.rows.push(TaskRow {
            task_index: t,
            classes_seen,
            acc_baseline: res.overall,
            acc_finetuned: res.overall,
            acc_taskpred: res.task_prediction,
            epochs_used: cfg.control.epochs,
        });
        let log = state.epoch_log.last().map_or(&[][..], Vec::as_slice);
        report
            .efficiency
            .push(efficiency(log, classes_seen, cfg.threshold));
        report.final_per_task_finetuned = res.per_task.clone();
        report.final_per_task_baseline = res.per_task;
    }
    Ok(report)
}

fn check_stream_matches(state: &BaselineState, stream: &Stream) -> Result<()> {
    let matches = state.learned_tasks.len() <= stream.tasks.len()
        && state
            .learned_tasks
            .iter()
            .zip(&stream.tasks)
            .all(|(meta, task)| meta.classes == task.classes);
    if matches {
        Ok(())
    } else {
        Err(config_err(
            "dataset",
            "checkpoint tasks do not match the configured stream",
        ))
    }
}

/// Scores a saved state on the test sets of its learned tasks. Produces one row.
pub fn run_eval(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<RunReport> {
    cfg.validate()?;
    let ck = load_checkpoint(checkpoint)?;
    let stream = build_stream(cfg)?;
    check_stream_matches(&ck.state, &stream)?;
    let t = ck.state.learned_tasks.len();
    if t == 0 {
        return Err(HarnessError::Corrupt(
            "checkpoint has no learned task".into(),
        ));
    }
    let mut report = new_report(cfg)?;
    let mut cache = FineTuneCache::new();
    let res = incremental_test(&ck.state, &test_sets(&stream, t), &cfg.finetune, &mut cache)?;
    report.rows.push(TaskRow {
        task_index: t,
        classes_seen: ck.state.learned_classes().len(),
        acc_baseline: res.baseline.overall,
        acc_finetuned: res.overall,
        acc_taskpred: res.baseline.task_prediction,
        epochs_used: ck.state.epoch_log.last().map_or(0, Vec::len),
    });
    report.final_per_task_baseline = res.baseline.per_task;
    report.final_per_task_finetuned = res.per_task;
    Ok(report)
}

/// Adapts a trained state to episodes drawn from the held-out classes.
pub fn run_meta_test_state(
    cfg: &ExperimentConfig,
    state: &BaselineState,
) -> Result<(MetaTestRow, MetaTestResult)> {
    cfg.validate()?;
    let stream = build_stream(cfg)?;
    let held_out = stream
        .held_out
        .as_ref()
        .ok_or_else(|| config_err("held_out_classes", "meta-testing needs held-out classes"))?;
    let m = &cfg.metatest;
    let episodes = make_episodes(
        held_out,
        m.n_way,
        m.k_shot,
        m.episodes,
        m.test_size,
        seed::derive(cfg.seeds.data, STREAM_EPISODES),
    )?;
    let learned = state.learned_classes();
    let result = meta_test(BaseModel::of(state, &learned), &episodes, &cfg.adapt)?;
    let row = MetaTestRow {
        n_way: m.n_way,
        k_shot: m.k_shot,
        episodes: episodes.len(),
        mean_accuracy: result.mean,
    };
    Ok((row, result))
}

/// [`run_meta_test_state`] on a checkpoint file.
pub fn run_meta_test(cfg: &ExperimentConfig, checkpoint: &Path) -> Result<RunReport> {
    let ck = load_checkpoint(checkpoint)?;
    let mut report = new_report(cfg)?;
    let (row, _) = run_meta_test_state(cfg, &ck.state)?;
    report.metatest.push(row);
    Ok(report)
}
