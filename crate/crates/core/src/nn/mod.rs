//! Minimal dense-tensor neural toolkit with reverse-mode differentiation.
//!
//! Everything runs at 64-bit precision on a per-example operation tape; the
//! batch dimension is handled by building one sub-graph per example and
//! averaging the losses. All randomness (init, dropout) flows from injected
//! seeded generators, so identical seeds give bit-identical training.

mod layers;
mod optim;
mod tape;
mod tensor;

use thiserror::Error;

pub use layers::{
    attention, bce_loss, dropout, fc, l2_penalty, multi_head, Activation, HeadNodes, Mode,
};
pub use optim::{adam_step, kaiming_uniform, xavier_uniform, AdamState, Parameter};
pub use tape::{clamp_pred, stable_sigmoid, NodeId, Tape, BCE_CLAMP, LAYER_NORM_EPS};
pub use tensor::Tensor;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("attention over an empty key set")]
    EmptyKeySet,
    #[error("dropout rate must lie in [0, 1) (got {0})")]
    InvalidRate(f64),
}
