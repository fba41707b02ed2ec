//! Fixed-confidence best-arm identification in linear bandits.
//!
//! The crate provides:
//!
//! - [`linalg`]: the regularized design matrix `V = λI + Σ x xᵀ` with an
//!   incrementally maintained inverse (rank-one updates, periodic refresh)
//!   and the quadratic forms every selection rule consumes;
//! - [`env`]: bandit instances, Gaussian reward generation, seeded
//!   reproducible random streams, and the synthetic instance generators;
//! - [`algo`]: the adaptive confidence-ellipsoid algorithm (stopping,
//!   sampling and recommendation rules), plus a static-allocation baseline;
//! - [`complexity`]: the instance-dependent sample-complexity lower bound
//!   `H_G` and its oracle allocation, solved by Frank-Wolfe over the simplex.
//!
//! All randomness flows through [`env::RngStream`], a ChaCha12 generator
//! keyed by `(master_seed, stream_index)`, so every run is reproducible
//! bit-for-bit across platforms.

pub mod algo;
pub mod complexity;
pub mod env;
pub mod error;
pub mod linalg;

pub use error::{Error, Result};

// Matrix/vector types used throughout the public API.
pub use nalgebra::{DMatrix, DVector};
