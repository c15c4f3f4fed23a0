//! Hierarchical recurrent network for key-subshot video summarization.
//!
//! A first LSTM layer encodes every fixed-length subshot of frame features
//! into one vector; a bidirectional second layer runs over those vectors and
//! a small head scores each subshot as key or non-key. Training is per-video
//! SGD with exact backpropagation through time.

mod codec;

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod hrnn;
pub mod numerics;
pub mod recurrent;
pub mod registry;
pub mod training;

pub use codec::write_atomic;
pub use error::{Error, Result};
pub use hrnn::{HrnnDims, HrnnModel, KeynessPrediction};
pub use registry::{KeynessModel, ModelConfig, ModelRegistry};
