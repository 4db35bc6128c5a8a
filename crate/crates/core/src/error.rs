use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("coordinate {0} lies outside the unit interval")]
    Domain(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("task dimension {task} does not match actuation dimension {actuation}; the inverse requires a square Jacobian")]
    NotSquare { task: usize, actuation: usize },

    #[error("nonphysical activation: intrinsic stretch {stretch} at s = {s}")]
    NonPhysicalActivation { s: f64, stretch: f64 },

    #[error("boundary value solver did not converge (residual {residual:e} after {iterations} iterations)")]
    SolverFailure { residual: f64, iterations: usize },

    #[error("dataset generation failed: {failed} of {total} slots could not be solved")]
    Generation { failed: usize, total: usize },

    #[error("singular task Jacobian at step {step} (condition number {cond:e})")]
    Singular { step: usize, cond: f64 },

    #[error("non-finite value at step {step}: {what}")]
    Numerical { step: usize, what: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (lr {lr:e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
