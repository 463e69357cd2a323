use crate::expr::{EvalError, ParseError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Parse { path: String, source: ParseError },

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error("scenario {path}: {message}")]
    Scenario { path: String, message: String },

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// The solution left every bounded set before the final time.
    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64 },

    #[error("projection onto the constraint manifold failed: {0}")]
    Projection(String),

    /// `|det(I - Phi(T))|` is below the caller's threshold.
    #[error("non-resonance fails: |det(I - Phi(T))| = {0:e}")]
    Resonance(f64),

    /// Degree is zero or undefined, so no branch is guaranteed.
    #[error("hypothesis not met: {0}")]
    Hypothesis(String),

    #[error("degenerate zero at {location:?} (|det| = {margin:e})")]
    DegenerateZero { location: Vec<f64>, margin: f64 },

    #[error("zero at {location:?} lies on the region boundary")]
    BoundaryZero { location: Vec<f64> },

    #[error("degree methods disagree: sign-sum {sign_sum}, oracle {oracle}")]
    DegreeMismatch { sign_sum: i32, oracle: i32 },

    #[error("Newton iteration stagnated after {iterations} iterations (residual {residual:e})")]
    NewtonStagnation { iterations: usize, residual: f64 },

    #[error("fixed point at {point:?} lies on the boundary of the search region")]
    BoundaryFixedPoint { point: Vec<f64> },

    #[error("degenerate fixed point at {point:?}: eigenvalue margin {margin:e}")]
    DegenerateFixedPoint { point: Vec<f64>, margin: f64 },

    #[error("variational and finite-difference Jacobians disagree (relative {0:e})")]
    JacobianMismatch(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True when the failure means a theorem hypothesis is not met rather
    /// than a computational fault.
    pub fn is_hypothesis_failure(&self) -> bool {
        matches!(self, Error::Resonance(_) | Error::Hypothesis(_))
    }

    pub(crate) fn scenario(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Scenario {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
