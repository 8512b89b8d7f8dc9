//! Parameter-vector algebra: SGD steps, learning-rate decay and blending.

use alloc::vec::Vec;

use super::params::ParamVector;
use crate::error::{Error, Result};

/// Epochs between learning-rate decays.
pub const LR_DECAY_EVERY: usize = 20;
/// Multiplicative decay applied every [`LR_DECAY_EVERY`] epochs.
pub const LR_DECAY_FACTOR: f64 = 0.2;

/// `params − lr · grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grad, lr)?;
    Ok(out)
}

pub fn sgd_step_in_place(params: &mut ParamVector, grad: &ParamVector, lr: f64) -> Result<()> {
    params.check_layout(grad, "sgd_step")?;
    if !grad.values().iter().all(|g| g.is_finite()) {
        return Err(Error::Numeric("sgd_step gradient"));
    }
    for (p, g) in params.values_mut().iter_mut().zip(grad.values()) {
        *p -= lr * g;
    }
    Ok(())
}

/// `base_lr × 0.2^⌊epoch / 20⌋`.
pub fn lr_at(epoch: usize, base_lr: f64) -> f64 {
    let decays = (epoch / LR_DECAY_EVERY) as i32;
    base_lr * libm::pow(LR_DECAY_FACTOR, decays as f64)
}

/// `(1 − alpha)·a + alpha·b`.
pub fn axpy_blend(a: &ParamVector, b: &ParamVector, alpha: f64) -> Result<ParamVector> {
    a.check_layout(b, "axpy_blend")?;
    let values: Vec<f64> = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (1.0 - alpha) * x + alpha * y)
        .collect();
    a.with_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkernel::spec::NetworkSpec;
    use alloc::vec;

    fn spec() -> NetworkSpec {
        NetworkSpec::mlp(1, vec![], 1).unwrap()
    }

    fn pv(v: [f64; 2]) -> ParamVector {
        ParamVector::from_values(&spec(), v.to_vec()).unwrap()
    }

    #[test]
    fn sgd_examples() {
        let p = pv([1.0, -3.0]);
        assert!(sgd_step(&p, &p.zeros_like(), 0.1).unwrap().bit_eq(&p));
        let out = sgd_step(&p, &pv([2.0, 0.0]), 0.1).unwrap();
        assert!((out.values()[0] - 0.8).abs() < 1e-15);

        let g1 = pv([0.3, -1.0]);
        let g2 = pv([0.7, 2.0]);
        let two = sgd_step(&sgd_step(&p, &g1, 0.1).unwrap(), &g2, 0.1).unwrap();
        let one = sgd_step(&p, &pv([1.0, 1.0]), 0.1).unwrap();
        for (a, b) in two.values().iter().zip(one.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sgd_rejects_non_finite() {
        let p = pv([1.0, 1.0]);
        assert!(matches!(
            sgd_step(&p, &pv([f64::INFINITY, 0.0]), 0.1),
            Err(Error::Numeric(_))
        ));
        let other = ParamVector::zeros(&NetworkSpec::mlp(2, vec![], 1).unwrap());
        assert!(matches!(sgd_step(&p, &other, 0.1), Err(Error::Layout(_))));
    }

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_at(0, 0.1), 0.1);
        assert_eq!(lr_at(19, 0.1), 0.1);
        assert!((lr_at(20, 0.1) - 0.02).abs() < 1e-15);
        assert!((lr_at(45, 0.1) - 0.004).abs() < 1e-15);
    }

    #[test]
    fn blend_examples() {
        let a = pv([0.0, 0.0]);
        let b = pv([1.0, 1.0]);
        assert!(axpy_blend(&a, &b, 0.0).unwrap().bit_eq(&a));
        assert!(axpy_blend(&a, &b, 1.0).unwrap().bit_eq(&b));
        assert_eq!(axpy_blend(&a, &b, 0.5).unwrap().values(), &[0.5, 0.5]);
    }
}
