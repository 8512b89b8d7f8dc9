use std::fmt;

/// Epoch budget beyond which a method counts as never reaching the threshold.
pub const EPOCH_CAP: usize = 70;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochsToThreshold {
    /// 1-based epoch of the first accuracy at or above the threshold.
    Reached(usize),
    NotReached,
}

impl fmt::Display for EpochsToThreshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Reached(n) => write!(f, "{n}"),
            Self::NotReached => f.write_str("NOT_REACHED"),
        }
    }
}

/// First epoch (1-based, within `cap`) whose accuracy meets `threshold`.
pub fn epochs_to_accuracy(curve: &[f64], threshold: f64, cap: usize) -> EpochsToThreshold {
    curve
        .iter()
        .take(cap)
        .position(|&a| a >= threshold)
        .map_or(EpochsToThreshold::NotReached, |i| {
            EpochsToThreshold::Reached(i + 1)
        })
}
