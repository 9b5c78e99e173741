//! Duality and intertwining of finite Markov kernels.
//!
//! Kernels are square nonnegative matrices on `{0, ..., N}`. The crate builds
//! dual kernels `P̂` with `H P̂' = P H` for several families of duality
//! functions, turns a duality into an intertwining `P̃ Λ = Λ ⃖P`, and uses the
//! result for strong stationary duals, absorption-time laws and couplings.

pub mod chains;
pub mod coupling;
pub mod duals;
pub mod error;
pub mod intertwine;
pub mod kernel;
pub mod linalg;
pub mod spectral;
pub mod ssd;
pub mod tol;

pub use error::{Error, Result};
pub use kernel::{Kernel, ProbVector};
