use thiserror::Error;

/// Errors raised by the accountant pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountantError {
    /// A mechanism or query parameter is outside its valid domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The loss inverse was requested outside the image of the loss function.
    #[error("privacy loss {s} is outside the support ({lo}, {hi})")]
    OutsideSupport { s: f64, lo: f64, hi: f64 },

    /// The truncation interval cuts into the left end of the PLD support.
    #[error("truncation radius L = {radius} is too small: support starts at {support_lo}")]
    TruncationTooSmall { radius: f64, support_lo: f64 },

    /// Two discretised PLDs do not live on the same lattice.
    #[error("grid mismatch: (L = {left_radius}, n = {left_n}) vs (L = {right_radius}, n = {right_n})")]
    GridMismatch {
        left_radius: f64,
        left_n: usize,
        right_radius: f64,
        right_n: usize,
    },

    /// The inverse transform left a non-negligible imaginary part.
    #[error("imaginary residue {residue:e} (relative) exceeds the limit {limit:e}")]
    ImaginaryResidue { residue: f64, limit: f64 },

    /// The requested delta is not smaller than delta(0); epsilon = 0 already suffices.
    #[error("target delta {target} is at or above delta(0) = {delta_at_zero}")]
    TargetAboveDeltaAtZero { target: f64, delta_at_zero: f64 },

    /// The requested delta is below what the grid can resolve before epsilon reaches L.
    #[error("target delta {target} is below the resolvable floor {floor} of this grid")]
    TargetBelowFloor { target: f64, floor: f64 },

    /// An iterative solver hit its iteration cap.
    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// An oracle was called on a problem larger than it is meant for.
    #[error("oracle size guard: {0}")]
    OracleTooLarge(String),
}

pub type Result<T, E = AccountantError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> AccountantError {
    AccountantError::InvalidParameter(msg.into())
}
