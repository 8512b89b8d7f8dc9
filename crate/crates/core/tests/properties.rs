mod common;

use std::collections::BTreeSet;

use bimaml_core::baseline::outer_update;
use bimaml_core::numkernel::Batch;
use bimaml_core::numkernel::{
    axpy_blend, focal_loss, softmax, softmax_rows, LossConfig, Matrix, NetworkSpec, ParamVector,
};
use bimaml_core::taskstream::{split_support_query, TaskSamples};
use common::{check_memory_invariants, cross_entropy, naive_softmax};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, 1..12)
}

fn pv(values: Vec<f64>) -> ParamVector {
    let spec = NetworkSpec::mlp(1, vec![], values.len() / 2).unwrap();
    ParamVector::from_values(&spec, values).unwrap()
}

fn endpoint_set() -> impl Strategy<Value = (Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..6).prop_flat_map(|half| {
        let n = 2 * half;
        (
            prop::collection::vec(-5.0f64..5.0, n),
            prop::collection::vec(prop::collection::vec(-5.0f64..5.0, n), 1..6),
        )
    })
}

proptest! {
    #[test]
    fn softmax_is_a_shift_invariant_distribution(z in logits(), c in -50.0f64..50.0) {
        let p = softmax(&z);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        for (a, b) in p.iter().zip(softmax(&shifted)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in p.iter().zip(naive_softmax(&z)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_with_zero_gamma_is_cross_entropy(
        rows in prop::collection::vec(prop::collection::vec(-8.0f64..8.0, 3), 1..10),
        seed in any::<u64>(),
    ) {
        let z = Matrix::from_rows(&rows).unwrap();
        let p = softmax_rows(&z);
        let labels: Vec<usize> = (0..rows.len()).map(|i| ((seed >> (i % 32)) % 3) as usize).collect();
        let fl = focal_loss(&p, &labels, &LossConfig { gamma: 0.0 }).unwrap();
        prop_assert!((fl - cross_entropy(&p, &labels)).abs() < 1e-10);
        let focal = focal_loss(&p, &labels, &LossConfig { gamma: 2.0 }).unwrap();
        prop_assert!(focal <= fl + 1e-15);
    }

    #[test]
    fn outer_update_algebra((phi, ends) in endpoint_set(), eps in 0.0f64..=1.0) {
        let phi = pv(phi);
        let ends: Vec<ParamVector> = ends.into_iter().map(pv).collect();
        // single endpoint, full step
        prop_assert!(outer_update(&phi, &ends[..1], 1.0).unwrap().bit_eq(&ends[0]));
        prop_assert!(outer_update(&phi, &ends, 0.0).unwrap().bit_eq(&phi));

        let out = outer_update(&phi, &ends, eps).unwrap();
        let mut rev = ends.clone();
        rev.reverse();
        for (a, b) in out.values().iter().zip(outer_update(&phi, &rev, eps).unwrap().values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        // closed form with the first endpoint counted twice
        let mut dup = ends.clone();
        dup.push(ends[0].clone());
        let m = ends.len() as f64;
        let got = outer_update(&phi, &dup, eps).unwrap();
        for i in 0..phi.len() {
            let sum: f64 = ends.iter().map(|e| e.values()[i]).sum();
            let mean = (sum + ends[0].values()[i]) / (m + 1.0);
            let expect = phi.values()[i] + eps * (mean - phi.values()[i]);
            prop_assert!((got.values()[i] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn blend_is_affine(a in prop::collection::vec(-5.0f64..5.0, 4), b in prop::collection::vec(-5.0f64..5.0, 4), t in 0.0f64..=1.0) {
        let out = axpy_blend(&pv(a.clone()), &pv(b.clone()), t).unwrap();
        for i in 0..4 {
            prop_assert!((out.values()[i] - ((1.0 - t) * a[i] + t * b[i])).abs() <= 1e-12);
        }
    }
}

/// Task sizes: classes per task and samples per class, capped so every
/// class can fill its quota.
fn memory_sequence() -> impl Strategy<Value = (usize, Vec<Vec<usize>>, u64)> {
    (
        10usize..200,
        prop::collection::vec(prop::collection::vec(200usize..260, 1..4), 1..=10),
        any::<u64>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn memory_capacity_and_balance((cap, tasks, seed) in memory_sequence()) {
        prop_assert_eq!(check_memory_invariants(cap, &tasks, seed), Ok(()));
    }

    #[test]
    fn support_query_is_a_balanced_partition(
        sizes in prop::collection::vec(1usize..300, 1..6),
        f in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let pool: Vec<TaskSamples> = sizes
            .iter()
            .enumerate()
            .map(|(t, &n)| {
                let rows: Vec<[f64; 2]> = (0..n).map(|i| [t as f64, i as f64]).collect();
                TaskSamples {
                    task: t + 1,
                    batch: Batch::new(Matrix::from_rows(&rows).unwrap(), vec![t; n]).unwrap(),
                }
            })
            .collect();
        let split = split_support_query(&pool, f, seed).unwrap();

        let mut seen = BTreeSet::new();
        for r in split.support_origin.iter().chain(split.query_origin.iter().flatten()) {
            prop_assert!(seen.insert(*r), "sample {r:?} used twice");
        }
        prop_assert_eq!(seen.len(), sizes.iter().sum::<usize>());

        let mut per_task = vec![0usize; sizes.len()];
        for r in &split.support_origin {
            per_task[r.task_pos] += 1;
        }
        let budget = (f * sizes.iter().sum::<usize>() as f64).round() as usize;
        let share = budget.div_ceil(sizes.len());
        let smallest = *sizes.iter().min().unwrap();
        let cap = ((f * smallest as f64).ceil() as usize).max(1);
        for (t, &got) in per_task.iter().enumerate() {
            prop_assert!(got >= 1, "task {t} has no support sample");
            prop_assert!(got <= cap.min(share.max(1)), "task {t}: {got}");
        }
        let (lo, hi) = (per_task.iter().min().unwrap(), per_task.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "support counts {per_task:?}");
        prop_assert_eq!(split.support.len(), split.support_origin.len());
        for (q, origin) in split.query.iter().zip(&split.query_origin) {
            prop_assert_eq!(q.batch.len(), origin.len());
        }
    }
}
