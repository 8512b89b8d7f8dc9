mod common;

use bimaml_core::numkernel::{
    forward, gradient, LossConfig, NetworkSpec, ParamVector, Segment, SegmentSet,
};
use common::{max_fd_error, naive_forward, random_net};

#[test]
fn gradient_matches_central_differences() {
    for s in 0..30 {
        let (spec, params, batch) = random_net(s);
        for gamma in [0.0, 2.0] {
            let cfg = LossConfig { gamma };
            let err = max_fd_error(&spec, &params, &batch, &cfg, SegmentSet::NONE, 1e-5);
            assert!(err < 1e-4, "net {s} gamma {gamma}: rel err {err}");
        }
    }
}

#[test]
fn frozen_segments_get_zero_and_the_rest_stays_exact() {
    for s in 100..115 {
        let (spec, params, batch) = random_net(s);
        let cfg = LossConfig::default();
        for frozen in [SegmentSet::CLASSIFIER, SegmentSet::EXTRACTOR] {
            let err = max_fd_error(&spec, &params, &batch, &cfg, frozen, 1e-5);
            assert!(err < 1e-4, "net {s}: rel err {err}");
        }
        let g = gradient(&spec, &params, &batch, &cfg, SegmentSet::ALL).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn forward_matches_naive_loops() {
    for s in 200..230 {
        let (spec, params, batch) = random_net(s);
        let logits = forward(&spec, &params, &batch).unwrap();
        for (i, x) in batch.inputs().iter_rows().enumerate() {
            let (expect, _) = naive_forward(&spec, &params, x);
            for (a, b) in logits.row(i).iter().zip(&expect) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "{a} vs {b}");
            }
        }
    }
}

#[test]
fn mnist_sized_forward_matches_naive_loops() {
    let spec = NetworkSpec::mnist(10);
    let params = ParamVector::init(&spec, 3);
    let x: Vec<f64> = (0..784).map(|i| ((i * 37) % 255) as f64 / 255.0).collect();
    let batch = bimaml_core::numkernel::Batch::new(
        bimaml_core::numkernel::Matrix::from_rows(std::slice::from_ref(&x)).unwrap(),
        vec![4],
    )
    .unwrap();
    let logits = forward(&spec, &params, &batch).unwrap();
    let (expect, _) = naive_forward(&spec, &params, &x);
    for (a, b) in logits.row(0).iter().zip(&expect) {
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }
    assert_eq!(
        params.layout().segment_range(Segment::Classifier).len(),
        401 * 10
    );
}
