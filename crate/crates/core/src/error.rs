use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model orders: {0}")]
    InvalidOrders(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("leading coefficient vanishes (|c0| = {value:e}, tolerance {tolerance:e})")]
    LeadingCoefficientVanishes { value: f64, tolerance: f64 },

    #[error("noise moment of order {order} is unavailable")]
    OrderUnavailable { order: usize },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("moment statistics have mismatched model orders")]
    OrdersMismatch,

    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,

    #[error("gradient degenerate at pick {index} (norm {norm:e}); hyperplanes may be repeated")]
    GradientDegenerate { index: usize, norm: f64 },

    #[error("first coordinate of recovered normal {index} vanishes")]
    FirstCoordinateVanishes { index: usize },

    #[error("trajectory unbounded: |x| = {value:e} at k = {k}")]
    TrajectoryUnbounded { k: usize, value: f64 },

    #[error("output series is identically zero")]
    AllZeroOutput,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed dataset: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code used by the command-line front end. Every variant maps
    /// to a distinct nonzero value.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidOrders(_) => 10,
            Error::DimensionMismatch { .. } => 11,
            Error::LeadingCoefficientVanishes { .. } => 12,
            Error::OrderUnavailable { .. } => 13,
            Error::SeriesTooShort(_) => 14,
            Error::OrdersMismatch => 15,
            Error::NonFiniteMatrix => 16,
            Error::GradientDegenerate { .. } => 17,
            Error::FirstCoordinateVanishes { .. } => 18,
            Error::TrajectoryUnbounded { .. } => 19,
            Error::AllZeroOutput => 20,
            Error::InvalidConfig(_) => 21,
            Error::Io(_) => 22,
            Error::Format(_) => 23,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            Error::Io(e.to_string())
        } else {
            Error::Format(e.to_string())
        }
    }
}
