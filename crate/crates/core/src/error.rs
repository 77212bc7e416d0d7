use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    /// Input lies outside the domain where the operation is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// The point is in (or numerically indistinguishable from) Crit(H, Phi).
    #[error("critical point: |nabla H| = {norm:e} is below {eps:e}")]
    Critical { norm: f64, eps: f64 },

    /// A numerical procedure failed to meet its tolerance.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The integrator could not continue the orbit.
    #[error("flow failure at t = {reached}: {reason}")]
    FlowFailure { reached: f64, reason: String },

    /// The localisation function kind does not satisfy the hypotheses of the operation.
    #[error("unsupported localisation function: {0}")]
    Unsupported(String),

    /// Invalid construction parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A truncated quantum system cannot certify the requested time window.
    #[error("time window too small: leakage {leakage:e} at t = {time}; largest certified radius {max_radius}")]
    WindowTooSmall {
        leakage: f64,
        time: f64,
        max_radius: f64,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;
