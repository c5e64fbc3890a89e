//! Variational differential-equation solving on a dense statevector simulator.
//!
//! Unknown functions are encoded as scaled expectation values of
//! Chebyshev-weighted diagonal observables measured on parameterized circuits.
//! Residuals of the differential operator on a collocation grid form the
//! training loss, which is minimized with CMA-ES or with gradient methods
//! driven by parameter-shift gradients.
//!
//! Qubit 0 is the most significant bit of a computational basis index
//! throughout the crate.

pub mod encoding;
pub mod error;
pub mod loss;
pub mod optimize;
pub mod problems;
pub mod rng;
pub mod sim;
pub mod spectral;

pub use error::{Error, Result};
