//! Mesh-free scattered-data interpolation in three dimensions.
//!
//! The engine fits a top-down octree of local truncated-polynomial models to
//! point samples: each node performs a least-squares fit of geometric
//! moments (a Vandermonde basis) to the residual left by its ancestors, and
//! recursion continues into octants whose residual RMS still exceeds a
//! threshold. Evaluation accumulates the local polynomials along the
//! root-to-leaf containment path.
//!
//! A validation layer factors the Gaussian RBF kernel by polynomial order
//! (Vandermonde moments, Hermite numbers, and a QR-based generalized
//! inverse), and a benchmark harness reproduces convergence studies on the
//! three-dimensional Franke test function over seeded random grids.
//!
//! Determinism is a contract throughout: identical inputs produce bit
//! identical fits, files, and benchmark rows for any thread count.

pub mod bench;
pub mod error;
pub mod fmt;
pub mod kernel;
pub mod linalg;
pub mod multiindex;

pub use error::{Error, Result};
