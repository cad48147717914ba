//! Proxy-gradient source optimization over a from-scratch conditional
//! flow-matching stack.
//!
//! The crate trains small velocity-field MLPs on synthetic data, solves
//! linear inverse problems by optimizing the flow's latent source point with
//! a proxy gradient (plus a full-backprop baseline and a closed-form linear
//! oracle), and ships the diagnostics that make the underlying conditioning
//! and alignment claims measurable.

pub mod checkpoint;
pub mod coupling;
pub mod dataset;
pub mod degrade;
pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod harness;
pub mod metrics;
pub mod net;
pub mod numerics;
pub mod obsfile;
pub mod solver;
pub mod train;

pub use error::{Error, Result};
pub use numerics::{Matrix, RngState, Vector};
