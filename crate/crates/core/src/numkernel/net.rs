//! Forward evaluation and exact backpropagation for the fully connected net.

use alloc::vec::Vec;

use super::batch::Batch;
use super::loss::{focal_logit_grad, focal_loss, softmax_rows, LossConfig};
use super::matrix::{matmul, matmul_a_bt, matmul_at_b, Matrix};
use super::params::ParamVector;
use super::spec::{NetworkSpec, SegmentSet};
use crate::error::{Error, Result};

fn check_inputs(spec: &NetworkSpec, params: &ParamVector, inputs: &Matrix) -> Result<()> {
    params.check_spec(spec, "params do not match network spec")?;
    if inputs.cols() != spec.input_dim() {
        return Err(Error::Shape {
            context: "input width",
            expected: spec.input_dim(),
            actual: inputs.cols(),
        });
    }
    Ok(())
}

fn check_labels(spec: &NetworkSpec, labels: &[usize]) -> Result<()> {
    match labels.iter().find(|&&l| l >= spec.output_dim()) {
        Some(bad) => Err(Error::Contract(alloc::format!(
            "label {bad} out of range for {} outputs",
            spec.output_dim()
        ))),
        None => Ok(()),
    }
}

/// Activations of every layer: `acts[0]` is the input, `acts[L]` the logits.
fn forward_trace(params: &ParamVector, inputs: &Matrix) -> Vec<Matrix> {
    let n = inputs.rows();
    let layers = params.layout().layers();
    let values = params.values();
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(inputs.clone());
    for (l, slot) in layers.iter().enumerate() {
        let mut z = Matrix::zeros(n, slot.fan_out);
        {
            let h = acts.last().expect("non-empty").as_slice();
            matmul(
                h,
                &values[slot.weights()],
                z.as_mut_slice(),
                n,
                slot.fan_in,
                slot.fan_out,
            );
        }
        let bias = &values[slot.biases()];
        let last = l + 1 == layers.len();
        for i in 0..n {
            for (v, b) in z.row_mut(i).iter_mut().zip(bias) {
                *v += b;
                if !last && *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(z);
    }
    acts
}

/// Logits `[n × output_dim]` of the network on `inputs`.
pub fn forward_inputs(spec: &NetworkSpec, params: &ParamVector, inputs: &Matrix) -> Result<Matrix> {
    check_inputs(spec, params, inputs)?;
    Ok(forward_trace(params, inputs).pop().expect("logits"))
}

pub fn forward(spec: &NetworkSpec, params: &ParamVector, batch: &Batch) -> Result<Matrix> {
    forward_inputs(spec, params, batch.inputs())
}

/// Mean focal loss of the network on `batch`.
pub fn loss(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    cfg: &LossConfig,
) -> Result<f64> {
    check_labels(spec, batch.labels())?;
    let logits = forward(spec, params, batch)?;
    focal_loss(&softmax_rows(&logits), batch.labels(), cfg)
}

/// Mean focal loss and its exact gradient. Entries belonging to a frozen
/// segment are exactly zero.
pub fn loss_and_gradient(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    cfg: &LossConfig,
    frozen: SegmentSet,
) -> Result<(f64, ParamVector)> {
    check_inputs(spec, params, batch.inputs())?;
    check_labels(spec, batch.labels())?;
    let n = batch.len();
    let mut acts = forward_trace(params, batch.inputs());
    let logits = acts.pop().expect("logits");
    let probs = softmax_rows(&logits);
    let loss = focal_loss(&probs, batch.labels(), cfg)?;

    let mut grad = params.zeros_like();
    let layers = params.layout().layers();
    let lowest_trainable = layers.iter().position(|s| !frozen.contains(s.segment));
    let Some(lowest_trainable) = lowest_trainable else {
        return Ok((loss, grad));
    };

    // delta holds ∂L/∂z for the current layer
    let mut delta = probs;
    let scale = 1.0 / n as f64;
    for (i, &t) in batch.labels().iter().enumerate() {
        focal_logit_grad(delta.row_mut(i), t, cfg.gamma, scale);
    }

    let values = params.values();
    for l in (lowest_trainable..layers.len()).rev() {
        let slot = layers[l];
        let h = &acts[l];
        if !frozen.contains(slot.segment) {
            let g = grad.values_mut();
            matmul_at_b(
                h.as_slice(),
                delta.as_slice(),
                &mut g[slot.weights()],
                slot.fan_in,
                n,
                slot.fan_out,
            );
            let gb = &mut g[slot.biases()];
            for i in 0..n {
                for (acc, d) in gb.iter_mut().zip(delta.row(i)) {
                    *acc += d;
                }
            }
        }
        if l == lowest_trainable {
            break;
        }
        let mut below = Matrix::zeros(n, slot.fan_in);
        matmul_a_bt(
            delta.as_slice(),
            &values[slot.weights()],
            below.as_mut_slice(),
            n,
            slot.fan_out,
            slot.fan_in,
        );
        // ReLU: h > 0 exactly where the pre-activation was positive
        for (d, &a) in below.as_mut_slice().iter_mut().zip(h.as_slice()) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        delta = below;
    }
    Ok((loss, grad))
}

pub fn gradient(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    cfg: &LossConfig,
    frozen: SegmentSet,
) -> Result<ParamVector> {
    loss_and_gradient(spec, params, batch, cfg, frozen).map(|(_, g)| g)
}

/// Index of the largest entry among `candidates`; ties go to the earliest candidate.
pub fn argmax_among(row: &[f64], candidates: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &c in candidates {
        let v = row[c];
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((c, v));
        }
    }
    best.map(|(c, _)| c)
}

/// Fraction of rows whose argmax over `classes` equals the label.
pub fn accuracy_among(
    spec: &NetworkSpec,
    params: &ParamVector,
    batch: &Batch,
    classes: &[usize],
) -> Result<f64> {
    let logits = forward(spec, params, batch)?;
    let correct = batch
        .labels()
        .iter()
        .enumerate()
        .filter(|&(i, &t)| argmax_among(logits.row(i), classes) == Some(t))
        .count();
    Ok(correct as f64 / batch.len() as f64)
}

/// Accuracy with the argmax taken over every output.
pub fn accuracy(spec: &NetworkSpec, params: &ParamVector, batch: &Batch) -> Result<f64> {
    let all: Vec<usize> = (0..spec.output_dim()).collect();
    accuracy_among(spec, params, batch, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::spec::Segment;
    use alloc::vec;

    fn tiny() -> (NetworkSpec, ParamVector, Batch) {
        let spec = NetworkSpec::new(3, vec![4, 4], 3, 2).unwrap();
        let params = ParamVector::init(&spec, 5);
        let x = Matrix::from_rows(&[[0.2, -0.4, 0.9], [1.0, 0.3, -0.7]]).unwrap();
        (spec, params, Batch::new(x, vec![2, 0]).unwrap())
    }

    #[test]
    fn zero_params_give_zero_logits() {
        let (spec, _, batch) = tiny();
        let zero = ParamVector::zeros(&spec);
        let logits = forward(&spec, &zero, &batch).unwrap();
        assert_eq!(logits.rows(), 2);
        assert!(logits.as_slice().iter().all(|&z| z == 0.0));
        let probs = softmax_rows(&logits);
        assert!(probs
            .as_slice()
            .iter()
            .all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = NetworkSpec::mlp(3, vec![], 3).unwrap();
        let mut values = vec![0.0; 12];
        for i in 0..3 {
            values[i * 3 + i] = 1.0;
        }
        let params = ParamVector::from_values(&spec, values).unwrap();
        let x = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        let logits = forward_inputs(&spec, &params, &x).unwrap();
        assert_eq!(logits.as_slice(), x.as_slice());
    }

    #[test]
    fn shape_errors() {
        let (spec, params, _) = tiny();
        let x = Matrix::from_rows(&[[0.0, 1.0]]).unwrap();
        assert!(matches!(
            forward_inputs(&spec, &params, &x),
            Err(Error::Shape { .. })
        ));
        let other = NetworkSpec::mlp(3, vec![5], 3).unwrap();
        let x = Matrix::from_rows(&[[0.0, 1.0, 2.0]]).unwrap();
        assert!(matches!(
            forward_inputs(&other, &params, &x),
            Err(Error::Layout(_))
        ));
    }

    #[test]
    fn frozen_segments_get_zero_gradient() {
        let (spec, params, batch) = tiny();
        let cfg = LossConfig::default();
        let all = gradient(&spec, &params, &batch, &cfg, SegmentSet::ALL).unwrap();
        assert!(all.values().iter().all(|&g| g == 0.0));

        let g = gradient(&spec, &params, &batch, &cfg, SegmentSet::CLASSIFIER).unwrap();
        assert!(g.segment(Segment::Classifier).iter().all(|&v| v == 0.0));
        assert!(g.segment(Segment::Extractor).iter().any(|&v| v != 0.0));

        let full = gradient(&spec, &params, &batch, &cfg, SegmentSet::NONE).unwrap();
        assert_eq!(
            full.segment(Segment::Extractor),
            g.segment(Segment::Extractor)
        );

        let top = gradient(&spec, &params, &batch, &cfg, SegmentSet::EXTRACTOR).unwrap();
        assert!(top.segment(Segment::Extractor).iter().all(|&v| v == 0.0));
        assert_eq!(
            top.segment(Segment::Classifier),
            full.segment(Segment::Classifier)
        );
    }

    #[test]
    fn argmax_ties_go_to_first_candidate() {
        assert_eq!(argmax_among(&[0.5, 0.5, 0.1], &[0, 1, 2]), Some(0));
        assert_eq!(argmax_among(&[0.5, 0.5, 0.9], &[1, 0]), Some(1));
        assert_eq!(argmax_among(&[0.5], &[]), None);
    }
}
