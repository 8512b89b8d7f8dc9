//! Balanced incremental meta-learning.
//!
//! A small fully connected network learns a stream of class-incremental
//! tasks. Each increment trains the lower layers on a task-balanced support
//! split with the classifier frozen, then runs Reptile-style per-task inner
//! loops on the query split and moves the shared parameters toward the
//! average endpoint. A constant-size exemplar memory is replayed alongside
//! each new task. At test time the model predicts the task, fine-tunes a copy
//! on that task's exemplars and sums both class distributions. For unseen
//! tasks the network is adapted from a few shots.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; `std` only enables runtime SIMD detection in the GEMM backend.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod adaption;
pub mod baseline;
pub mod control;
pub mod error;
pub mod finetune;
pub mod numkernel;
pub mod rehearsal;
pub mod seed;
pub mod taskstream;

pub use error::{Error, IdxError, Result};
