//! Shared error type for the numeric core.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("rejected configuration: {0}")]
    RejectedConfig(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("non-finite loss for example {index}")]
    NonFiniteLoss { index: usize },

    #[error("privacy target infeasible: {0}")]
    Infeasible(String),

    #[error(
        "privacy budget exhausted at step {step}: epsilon {epsilon:.6} exceeds target {target:.6}"
    )]
    BudgetExhausted { step: usize, epsilon: f64, target: f64 },

    #[error(
        "exceedance threshold not reached: terminal exceedance {terminal:.6} > target {target:.6}"
    )]
    ThresholdNotReached { terminal: f64, target: f64 },

    #[error("outside bound validity region: {0}")]
    OutOfValidityRegion(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed file: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
