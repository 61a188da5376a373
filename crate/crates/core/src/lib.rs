//! Teacher-student laboratory for power-law training dynamics with and
//! without feature superposition.
//!
//! * [`features`]: sparse input distributions and their moments.
//! * [`model`]: teacher, embedding, student, losses and exact gradients.
//! * [`trainer`]: online SGD with log-spaced instrumentation.
//! * [`theory`]: closed-form loss curves, exponents and linear
//!   superposition limits.
//! * [`scaling`]: power-law fits, compute frontiers, width scaling and
//!   wavefront diagnostics.

pub mod error;
pub mod features;
pub mod model;
pub mod rng;
pub mod scaling;
pub mod snapshot;
pub mod theory;
pub mod trainer;

pub use error::{LabError, Result};
pub use features::{sample_batch, DecayLaw, FrequencyVector, InputBatch};
pub use model::{Embedding, EmbeddingMode, GradientSet, Model, StudentParams, Teacher};
pub use ndarray;
