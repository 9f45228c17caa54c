//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by factorizations, steppers, and estimators.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A pivot underflowed the singularity threshold during LU or QR.
    #[error("singular matrix: pivot {pivot:.3e} below threshold {threshold:.3e}")]
    SingularMatrix { pivot: f64, threshold: f64 },

    /// A stage value or right-hand side evaluation produced a non-finite number.
    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    /// Newton iteration for the implicit stage equations failed to converge.
    #[error("Newton iteration diverged at t = {t} (h = {h:.3e}) after {iters} iterations")]
    NewtonDiverged { t: f64, h: f64, iters: usize },

    /// The step-size controller drove the step below the minimum allowed size.
    #[error("step size {h:.3e} fell below the minimum at t = {t}")]
    StepTooSmall { t: f64, h: f64 },

    /// Power iteration hit a numerically zero vector.
    #[error("power iteration vector norm underflowed")]
    ZeroVector,

    /// A windowed spectral estimate was requested on a run shorter than required.
    #[error("run of duration {duration:.3e} too short for window {window:.3e}")]
    RunTooShort { duration: f64, window: f64 },

    /// A stiffness-indicator window extends outside the recorded trace.
    #[error("window w = {w} around step {n} outside trace of {len} steps")]
    OutOfWindow { n: usize, w: usize, len: usize },

    /// Requested tableau name is not a builtin.
    #[error("unknown method: {0}")]
    UnknownMethod(String),

    /// Invalid configuration or parameters.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
