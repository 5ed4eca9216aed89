use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("innovation covariance is not positive definite after conditioning")]
    SingularInnovation,

    #[error("covariance factorization failed after jitter escalation")]
    CholeskyFailure,

    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("Jacobian could not be formed at the requested point")]
    JacobianUnavailable,

    #[error("Hessian could not be formed at the requested point")]
    HessianUnavailable,

    /// `n_x + lambda` must be strictly positive for the sigma spread.
    #[error("degenerate unscented scaling: n_x + lambda = {0}")]
    DegenerateScaling(f64),

    #[error("state of health {soh} is outside the blend range [0.8, 1.0] (extrapolated value {volts} V)")]
    OutOfBlendRange { soh: f64, volts: f64 },

    #[error("truth trajectory left the finite range at step {step}")]
    NonFiniteState { step: usize },

    #[error("filter estimate became non-finite at step {step}")]
    NonFiniteEstimate { step: usize },

    #[error("need at least {required} non-diverged runs, found {found}")]
    InsufficientSamples { required: usize, found: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = FilterError> = std::result::Result<T, E>;

pub(crate) fn check_dims(
    context: &'static str,
    expected: (usize, usize),
    found: (usize, usize),
) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(FilterError::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        })
    }
}
