use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Why a hyperexponential recursion step was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum InvalidReason {
    /// The residual CCDF at a fit point was not strictly positive.
    NonPositiveResidual { x: f64, value: f64 },
    /// A fitted weight fell outside `(0, 1)`.
    WeightOutOfRange { p: f64 },
    /// A fitted rate was not strictly positive.
    NonPositiveRate { lambda: f64 },
    /// Weights of a defective fit did not sum below one.
    NotDefective { sum: f64 },
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::NonPositiveResidual { x, value } => {
                write!(f, "residual {value:e} at x = {x} is not positive")
            }
            InvalidReason::WeightOutOfRange { p } => write!(f, "weight {p} outside (0, 1)"),
            InvalidReason::NonPositiveRate { lambda } => write!(f, "rate {lambda} is not positive"),
            InvalidReason::NotDefective { sum } => write!(f, "weights sum to {sum} >= 1"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A hyperexponential fit produced a non-valid distribution. `stage` is
    /// the 1-based index of the term being determined.
    #[error("invalid hyperexponential at stage {stage}: {reason}")]
    InvalidModel { stage: usize, reason: InvalidReason },

    #[error("residual CCDF {value:e} at x = {x} is below tolerance (tail overshoots target)")]
    NegativeResidual { x: f64, value: f64 },

    #[error("evaluator is not monotone: weight {index} = {value:e}")]
    NonMonotone { index: usize, value: f64 },

    #[error("invalid phase-type model: {0}")]
    InvalidGenerator(String),

    #[error("operation requires a proper model, got total initial mass {mass}")]
    Defective { mass: f64 },

    #[error("quadrature did not converge on [{a}, {b}]: estimated error {error:e}")]
    Quadrature { a: f64, b: f64, error: f64 },

    #[error("unstable queue: rho = {rho}")]
    Unstable { rho: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("could not bracket the inverse CCDF for u = {u}")]
    Bracketing { u: f64 },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that stem from a numerical method failing to converge.
    pub fn is_convergence(&self) -> bool {
        matches!(self, Error::Quadrature { .. } | Error::NonConvergence { .. })
    }

    /// True for errors raised while constructing a fit.
    pub fn is_fit_failure(&self) -> bool {
        matches!(
            self,
            Error::InvalidModel { .. } | Error::NegativeResidual { .. } | Error::NonMonotone { .. }
        )
    }
}
