//! Sketched least squares with bi-fidelity boosting.
//!
//! * [`linalg`]: least-squares solves, residual decomposition and the
//!   optimality coefficient.
//! * [`sketch`]: Gaussian, uniform, leverage, leveraged-volume and CPQR
//!   sketches.
//! * [`design`]: tensor Legendre design matrices and structured leverage
//!   sampling.
//! * [`bfb`]: the boosting algorithm and its diagnostics.
//! * [`harness`]: synthetic problems and experiment drivers.

// `!(x > 0.0)` style checks also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bfb;
pub mod cli;
pub mod design;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod sketch;

pub use error::{Error, Result};
