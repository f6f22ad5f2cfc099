//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by problem construction, parameter scheduling, and solver runs.
#[derive(Debug, Error)]
pub enum SaddleError {
    /// A vector or matrix does not have the dimensions the contract requires.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Smoothness/strong-convexity constants violate their ordering constraints.
    #[error("invalid smoothness constants: {0}")]
    InvalidSpec(String),

    /// The coupling matrix is identically zero; a positive largest singular
    /// value is required.
    #[error("zero coupling matrix")]
    ZeroCoupling,

    /// No parameter regime is applicable to the given constants.
    #[error("no applicable regime: {0}")]
    NoApplicableRegime(String),

    /// Hand-built solver parameters violate an invariant (e.g. theta outside (0,1)).
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),

    /// A diagnostic that needs function values was requested on a problem that
    /// only provides gradients.
    #[error("value oracle for {0} is not available")]
    MissingValueOracle(&'static str),

    /// An epsilon-accuracy check was asked against an empty reference set.
    #[error("empty reference set")]
    EmptyReference,

    /// Instance generation failed (infeasible target constants, inconsistent
    /// range flags, or a reference solution that does not close the optimality
    /// system).
    #[error("instance generation failed: {0}")]
    Generation(String),

    /// A diagnostic computation could not be carried out.
    #[error("diagnostics: {0}")]
    Diagnostics(String),
}

pub type Result<T> = std::result::Result<T, SaddleError>;
