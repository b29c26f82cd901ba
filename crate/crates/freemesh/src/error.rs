use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the fitting, kernel, and serialization layers.
#[derive(Debug, Error)]
pub enum Error {
    /// Expansion order above the supported maximum (workspace sizes are
    /// bounded at configuration time).
    #[error("unsupported expansion order lmax={lmax}; maximum supported is {max}")]
    UnsupportedOrder { lmax: usize, max: usize },

    /// Fewer sample points than basis columns.
    #[error("insufficient points: need at least {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    /// A NaN or infinity reached a numeric kernel.
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },

    /// Matrix/vector dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("matrix is not symmetric: max asymmetry {asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asym: f64, tol: f64 },

    /// A pivot inside the effective rank vanished during a triangular solve.
    #[error("zero pivot at column {index} inside the effective rank")]
    SingularPivot { index: usize },

    /// The factorization lost rank where full rank is required.
    #[error("rank-deficient system: effective rank {effective} < required {required}")]
    RankDeficient { effective: usize, required: usize },

    /// Flat-limit breakdown of the factored inverse: an eigenvalue or a
    /// shape-parameter power fell below the pivot threshold.
    #[error("ill-conditioned factorization: {what} underflows the pivot threshold")]
    IllConditioned { what: String },

    #[error("eigensolver did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    /// Malformed tree file, with the byte offset of the offending field.
    #[error("tree format error at byte {pos}: {msg}")]
    TreeFormat { pos: usize, msg: String },

    /// Recognized tree file with an unsupported version tag.
    #[error("unsupported tree format version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
