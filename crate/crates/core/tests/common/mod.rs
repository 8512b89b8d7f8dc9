//! Independent oracles shared by the integration and acceptance tests.
//! Nothing here calls the kernel's forward or backward pass.

#![allow(dead_code)]

use bimaml_core::numkernel::{
    gradient, loss, Batch, LossConfig, Matrix, NetworkSpec, ParamVector, SegmentSet,
};
use bimaml_core::rehearsal::{update_memory, MemorySet};
use bimaml_core::seed;
use bimaml_core::taskstream::Task;
use rand::Rng;

/// Triple-loop forward pass. Returns the logits and the smallest absolute
/// pre-activation of any hidden unit.
pub fn naive_forward(spec: &NetworkSpec, params: &ParamVector, x: &[f64]) -> (Vec<f64>, f64) {
    let v = params.values();
    let mut h = x.to_vec();
    let mut min_pre = f64::INFINITY;
    let last = spec.num_layers() - 1;
    for (l, slot) in params.layout().layers().iter().enumerate() {
        let mut z = vec![0.0; slot.fan_out];
        for (j, zj) in z.iter_mut().enumerate() {
            let mut acc = v[slot.biases().start + j];
            for (i, hi) in h.iter().enumerate() {
                acc += hi * v[slot.offset + i * slot.fan_out + j];
            }
            *zj = acc;
        }
        if l < last {
            for zj in &mut z {
                min_pre = min_pre.min(zj.abs());
                *zj = zj.max(0.0);
            }
        }
        h = z;
    }
    (h, min_pre)
}

pub fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

pub fn cross_entropy(probs: &Matrix, labels: &[usize]) -> f64 {
    let n = labels.len() as f64;
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| -probs.row(i)[l].max(1e-12).ln())
        .sum::<f64>()
        / n
}

/// A random network with at most 3 layers and 16 units per layer, a batch
/// for it, and its parameters, rejecting draws whose hidden pre-activations
/// come within `1e-3` of the ReLU kink.
pub fn random_net(seed_value: u64) -> (NetworkSpec, ParamVector, Batch) {
    let mut rng = seed::rng(seed_value);
    loop {
        let input = rng.random_range(1..=6);
        let hidden: Vec<usize> = (0..rng.random_range(0..=2))
            .map(|_| rng.random_range(1..=16))
            .collect();
        let output = rng.random_range(2..=5);
        let spec = NetworkSpec::mlp(input, hidden, output).unwrap();
        let params = ParamVector::init(&spec, rng.random());
        let values: Vec<f64> = params
            .values()
            .iter()
            .map(|&w| w + rng.random_range(-0.1..0.1))
            .collect();
        let params = params.with_values(values).unwrap();
        let n = rng.random_range(1..=4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..input).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels = (0..n).map(|_| rng.random_range(0..output)).collect();
        let batch = Batch::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
        let clear = batch
            .inputs()
            .iter_rows()
            .all(|x| naive_forward(&spec, &params, x).1 > 1e-3);
        if clear {
            return (spec, params, batch);
        }
    }
}

/// Largest relative error between the analytic gradient and central
/// differences with step `h`, over every coordinate outside `frozen`.
/// Frozen coordinates must be exactly zero; otherwise returns infinity.
pub fn max_fd_error(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    cfg: &LossConfig,
    frozen: SegmentSet,
    h: f64,
) -> f64 {
    let g = gradient(spec, params, batch, cfg, frozen).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let analytic = g.values()[i];
        if frozen.contains(params.layout().segment_of(i)) {
            if analytic != 0.0 {
                return f64::INFINITY;
            }
            continue;
        }
        let mut plus = params.values().to_vec();
        let mut minus = plus.clone();
        plus[i] += h;
        minus[i] -= h;
        let lp = loss(spec, &params.with_values(plus).unwrap(), batch, cfg).unwrap();
        let lm = loss(spec, &params.with_values(minus).unwrap(), batch, cfg).unwrap();
        let numeric = (lp - lm) / (2.0 * h);
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    worst
}

/// Nearest-centroid accuracy of `test` given labeled `train` samples.
pub fn nearest_centroid_accuracy(train: &Batch, test: &Batch) -> f64 {
    let classes = train.labels().iter().copied().max().unwrap() + 1;
    let dim = train.dim();
    let mut sums = vec![vec![0.0; dim]; classes];
    let mut counts = vec![0usize; classes];
    for (x, &l) in train.inputs().iter_rows().zip(train.labels()) {
        for (s, v) in sums[l].iter_mut().zip(x) {
            *s += v;
        }
        counts[l] += 1;
    }
    let hits = test
        .inputs()
        .iter_rows()
        .zip(test.labels())
        .filter(|(x, &l)| {
            let dist = |c: usize| -> f64 {
                sums[c]
                    .iter()
                    .zip(x.iter())
                    .map(|(s, v)| (s / counts[c] as f64 - v).powi(2))
                    .sum()
            };
            (0..classes)
                .filter(|&c| counts[c] > 0)
                .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
                == Some(l)
        })
        .count();
    hits as f64 / test.len() as f64
}

/// A task whose class `classes[i]` has `per_class[i]` distinct samples.
pub fn task(index: usize, classes: &[usize], per_class: &[usize]) -> Task {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (&c, &n) in classes.iter().zip(per_class) {
        for j in 0..n {
            rows.push([c as f64, j as f64]);
            labels.push(c);
        }
    }
    let b = Batch::new(Matrix::from_rows(&rows).unwrap(), labels).unwrap();
    Task {
        index,
        classes: classes.to_vec(),
        train: b.clone(),
        test: b,
    }
}

/// Feeds tasks with the given per-class sizes through the memory and checks
/// capacity and per-class balance after every update.
pub fn check_memory_invariants(
    capacity: usize,
    tasks: &[Vec<usize>],
    seed: u64,
) -> Result<(), String> {
    let mut mem = MemorySet::new(capacity).unwrap();
    let mut next_class = 0;
    for (t, sizes) in tasks.iter().enumerate() {
        let classes: Vec<usize> = (next_class..next_class + sizes.len()).collect();
        next_class += sizes.len();
        match update_memory(&mem, &task(t + 1, &classes, sizes), seed) {
            Ok(m) => mem = m,
            Err(_) if next_class > capacity => return Ok(()),
            Err(e) => return Err(e.to_string()),
        }
        if mem.len() > capacity {
            return Err(format!(
                "{} exemplars exceed capacity {capacity}",
                mem.len()
            ));
        }
        let counts: Vec<usize> = mem.classes().map(|c| mem.class_count(c)).collect();
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        if hi - lo > 1 {
            return Err(format!(
                "per-class counts {counts:?} differ by more than one"
            ));
        }
    }
    Ok(())
}
