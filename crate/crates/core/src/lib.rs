//! Quality-resilient snapshot-ensemble toolkit.
//!
//! Trains a small CNN classifier through cyclic cosine-annealed cycles,
//! mixing clean images with distorted copies (random-quality mixup) so that
//! each snapshot becomes an expert on one distortion family, then serves
//! predictions by averaging the snapshots' softmax outputs. A sweep harness
//! measures top-k accuracy across noise and blur severities.

pub mod arch;
pub mod autodiff;
pub mod data;
pub mod distortion;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod image;
pub mod mixup;
pub mod optim;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod trainer;
pub mod weights;

pub use error::{Error, Result};
