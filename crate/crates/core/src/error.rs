use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Domain(&'static str),

    #[error("invalid configuration: {what} (got {value})")]
    Config { what: &'static str, value: f64 },

    #[error("particles {i} and {j} have coincident centers")]
    Coincident { i: usize, j: usize },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("non-finite adjoint at step {step}")]
    GradientFailure { step: usize },

    #[error("FIRE did not converge after {steps} steps (max |F| = {residual:e})")]
    FireNotConverged { steps: usize, residual: f64 },

    #[error("packing protocol failed at diameter {diameter} (phi {phi}): {reason}")]
    PackingFailed {
        diameter: f64,
        phi: f64,
        reason: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

impl Error {
    /// Coarse failure class, used by the CLI to pick an exit code.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Domain(_) | Error::Config { .. } | Error::LengthMismatch { .. } => ErrorKind::Config,
            Error::FireNotConverged { .. } | Error::PackingFailed { .. } => ErrorKind::NonConvergence,
            Error::Coincident { .. }
            | Error::NonFinite { .. }
            | Error::GradientFailure { .. }
            | Error::Degenerate(_) => ErrorKind::Physics,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Physics,
    NonConvergence,
}
