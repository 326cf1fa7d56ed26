use thiserror::Error;

use crate::laws::Radius;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field configuration: {0}")]
    InvalidConfig(String),

    #[error("normalization error: {0}")]
    Normalization(String),

    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),

    #[error("division by exact zero")]
    DivisionByZero,

    #[error("domain error: {0}")]
    Domain(String),

    #[error("operands come from different field configurations")]
    ConfigMismatch,

    #[error("invalid probability law: {0}")]
    InvalidLaw(String),

    /// The profile increases between two grid radii (`smaller` < `larger`).
    #[error("profile is not nonincreasing: phi({smaller}) = {phi_smaller} < phi({larger}) = {phi_larger}")]
    MonotonicityViolation {
        smaller: Radius,
        larger: Radius,
        phi_smaller: f64,
        phi_larger: f64,
    },

    #[error("profile takes negative value {value} at {at}")]
    NegativeValue { at: Radius, value: f64 },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
