//! Deterministic dense-network numerics shared by every learner in the crate.

mod batch;
mod loss;
mod matrix;
mod net;
mod optim;
mod params;
mod spec;

pub use batch::Batch;
pub use loss::{focal_loss, softmax, softmax_into, softmax_rows, LossConfig, LOG_CLAMP};
pub use matrix::Matrix;
pub use net::{
    accuracy, accuracy_among, argmax_among, forward, forward_inputs, gradient, loss,
    loss_and_gradient,
};
pub use optim::{axpy_blend, lr_at, sgd_step, sgd_step_in_place, LR_DECAY_EVERY, LR_DECAY_FACTOR};
pub use params::{LayerSlot, Layout, ParamVector};
pub use spec::{Activation, NetworkSpec, Segment, SegmentSet};
