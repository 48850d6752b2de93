//! Mixed-precision geometric multigrid with incomplete Cholesky smoothing.
//!
//! The crate simulates reduced-precision arithmetic on top of `f64`, builds
//! high-order 1D finite element hierarchies, runs two-grid and V-cycles with
//! per-level precisions inside iterative refinement or preconditioned
//! conjugate gradients, and evaluates a-priori bounds on the finite
//! precision error of those cycles.

pub mod bounds;
pub mod cli;
pub mod cycle;
pub mod drivers;
pub mod error;
pub mod fem;
pub mod fparith;
pub mod hierarchy;
pub mod icsmooth;
pub mod sparse;

pub use error::{Error, Result};
pub use fparith::PrecisionSpec;
pub use sparse::{CsrMatrix, DenseVector};
