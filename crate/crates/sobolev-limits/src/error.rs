use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid address: {0}")]
    InvalidAddress(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("point outside the cube [-1,1]^n: {0:?}")]
    OutsideDomain(Vec<f64>),
    #[error("argument {value} outside the interval [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("schedule infeasible at level {level}: {reason}")]
    Infeasible { level: usize, reason: String },
    #[error("unsupported dimension n = {0}: {1}")]
    UnsupportedDimension(usize, &'static str),
    #[error("parameters for level {0} have not been solved")]
    NotInitialized(usize),
    #[error("geometric evaluation needs representable radii; level {0} only exists in log form")]
    LogOnly(usize),
    #[error("degree indeterminate: {0}")]
    Indeterminate(String),
    #[error("map is not invertible: {0}")]
    NotInvertible(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
