use thiserror::Error;

use crate::fpt::BihillParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sequence too short: need at least {required} samples, got {actual}")]
    SequenceTooShort { required: usize, actual: usize },

    #[error("degenerate sample variance (all samples equal)")]
    DegenerateVariance,

    #[error(
        "quadrature grid of {points} points needs {terms} covariance terms, \
         over the budget of {budget}; use a coarser grid or a shorter span"
    )]
    BudgetExceeded {
        points: usize,
        terms: u128,
        budget: u128,
    },

    #[error(
        "link saturated at t'={t_prime_hours} h: quasi-static recovery rate is {rate} channels"
    )]
    Saturated { t_prime_hours: f64, rate: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("empty histogram range [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },

    #[error("too few samples: need {required}, got {count}")]
    TooFewSamples { count: usize, required: usize },

    #[error("fit did not converge after {restarts} restarts (best residual {residual:e})")]
    NotConverged {
        best: Box<BihillParams>,
        residual: f64,
        restarts: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
