//! Small dense linear algebra and deterministic randomness.

mod matrix;
pub mod rng;
mod svd;

pub use matrix::{matmul, Matrix, Vector};
pub use rng::{sample_standard_normal, RngState};
pub use svd::{condition_number, reconstruction_residual, spectral_norm, svd};
