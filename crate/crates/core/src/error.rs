//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Failures surfaced by simulation, likelihood evaluation, and estimation.
#[derive(Debug, Error)]
pub enum Error {
    /// A diffusion Gram matrix (σσᵀ or τ₂τ₂ᵀ) is numerically singular; the
    /// nondegeneracy assumption of the model is violated at this point.
    #[error("singular diffusion: {which} has condition number {cond:.3e} (limit {limit:.1e}) at ({location})")]
    SingularDiffusion {
        which: &'static str,
        cond: f64,
        limit: f64,
        location: String,
    },

    /// The simulated state left the representable range (blow-up or a grid
    /// far too coarse for the timescale separation).
    #[error("non-finite state at step {step} (t = {t:.6})")]
    NonFiniteState { step: usize, t: f64 },

    /// Path arrays or grids do not agree in length/dimension.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The normal-equation matrix of the closed-form estimator is too
    /// ill-conditioned to solve; θ is not identifiable on this path.
    #[error("degenerate normal equations: condition number {cond:.3e}")]
    DegenerateNormalEquations { cond: f64 },

    /// Fisher information is not positive definite; no confidence statement
    /// can be made.
    #[error("Fisher information not positive definite: min eigenvalue {min_eig:.3e}")]
    NonPositiveDefinite { min_eig: f64 },

    /// Invalid user-supplied configuration (dimensions, domains, options).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// Malformed trajectory container or CSV.
    #[error("format error: {0}")]
    Format(String),
}
