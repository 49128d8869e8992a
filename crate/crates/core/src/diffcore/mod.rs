//! Minimal differentiable-compute core: dense arrays, the layer and loss
//! operations the encoder needs, reverse-mode gradients and AdamW.

mod adamw;
mod array;
mod gradcheck;
pub mod loss;
pub mod ops;
mod params;
mod tape;

pub use adamw::{AdamWConfig, AdamWState};
pub use array::DenseArray;
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use ops::{conv1d_forward, linear_forward, recurrent_forward, softmax, Direction};
pub use params::{ParamInit, ParamStore};
pub use tape::{Gradients, Tape, Var};
