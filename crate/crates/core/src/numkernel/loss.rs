//! Softmax and focal loss.

use alloc::format;
use alloc::vec::Vec;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Lower clamp applied to the true-class probability before taking its log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Focal loss exponent. `gamma == 0` is plain cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma: 2.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gamma.is_finite() && self.gamma >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "focal gamma must be >= 0, got {}",
                self.gamma
            )))
        }
    }
}

/// Max-subtracted softmax written into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = libm::exp(z - max);
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = alloc::vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Row-wise softmax of a logits matrix.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for i in 0..logits.rows() {
        softmax_into(logits.row(i), out.row_mut(i));
    }
    out
}

fn check_labels(probs: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != probs.rows() {
        return Err(Error::Shape {
            context: "focal_loss labels",
            expected: probs.rows(),
            actual: labels.len(),
        });
    }
    if probs.rows() == 0 {
        return Err(Error::Contract("focal loss of an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= probs.cols()) {
        return Err(Error::Contract(format!(
            "label {bad} out of range for {} classes",
            probs.cols()
        )));
    }
    Ok(())
}

/// `−(1−p)^γ · ln(max(p, LOG_CLAMP))` for a true-class probability `p`.
#[inline]
pub(crate) fn focal_term(p_true: f64, gamma: f64) -> f64 {
    let q = 1.0 - p_true;
    let weight = if gamma == 0.0 {
        1.0
    } else {
        libm::pow(q.max(0.0), gamma)
    };
    -weight * libm::log(p_true.max(LOG_CLAMP))
}

/// Mean focal loss over the batch, given softmax probabilities.
pub fn focal_loss(probs: &Matrix, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    check_labels(probs, labels)?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &t)| focal_term(probs.get(i, t), cfg.gamma))
        .sum();
    Ok(total / labels.len() as f64)
}

/// Derivative of the per-sample focal term with respect to the logits,
/// written into `dz` (already holding the probabilities `p`).
///
/// `∂FL/∂z_j = c · (δ_tj − p_j)` with
/// `c = γ(1−p_t)^{γ−1} p_t ln p_t − (1−p_t)^γ`.
#[inline]
pub(crate) fn focal_logit_grad(dz: &mut [f64], target: usize, gamma: f64, scale: f64) {
    let p_t = dz[target];
    let q = (1.0 - p_t).max(0.0);
    let clamped = p_t < LOG_CLAMP;
    let log_p = libm::log(p_t.max(LOG_CLAMP));
    let first = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        gamma * libm::pow(q, gamma - 1.0) * p_t * log_p
    };
    let second = if clamped {
        0.0
    } else if gamma == 0.0 {
        1.0
    } else {
        libm::pow(q, gamma)
    };
    let c = (first - second) * scale;
    for (j, v) in dz.iter_mut().enumerate() {
        let delta = if j == target { 1.0 } else { 0.0 };
        *v = c * (delta - *v);
    }
}
