//! Weakly-supervised complex human activity recognition.
//!
//! The crate trains a channel-wise convolutional / recurrent sensor encoder
//! with a two-headed objective: a mean-KL loss pulling the atomic head towards
//! a target distribution over atomic activities, plus cross-entropy on the
//! complex activity. It also provides the evaluation metrics, gradient-based
//! sensor attribution, temporal localization, and the explanation manifest
//! consumed by downstream renderers.

pub mod dataset;
pub mod diffcore;
pub mod encoder;
mod error;
pub mod explain;
pub mod metrics;
pub mod training;

pub use error::{Error, Result};
