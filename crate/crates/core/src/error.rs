use thiserror::Error;

/// Errors raised by the spline, mesh and projection routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("derivative order {order} exceeds degree {degree}")]
    DerivativeTooHigh { order: usize, degree: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point ({0}, {1}) lies at the singular vertex, inverse map undefined")]
    SingularPoint(f64, f64),

    #[error("point ({0}, {1}) lies outside the triangle")]
    OutsideDomain(f64, f64),

    #[error("singular local Gram matrix for dual functional {0}")]
    SingularGram(usize),

    #[error("Gram matrix condition number {0:e} exceeds limit")]
    IllConditioned(f64),

    #[error("level {level} below coarse level n0 = {n0}")]
    LevelTooSmall { level: u32, n0: u32 },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("element {0} is not part of the mesh")]
    UnknownElement(usize),

    #[error("derivative order {0} not supported")]
    UnsupportedDerivative(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures of the numerics (conditioning, singular local systems) as
    /// opposed to rejected input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::SingularGram(_) | Error::IllConditioned(_))
    }
}
