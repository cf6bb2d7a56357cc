use thiserror::Error;

/// Errors raised by the numerical laboratory.
///
/// The variants are grouped by how a driver should react: bad input
/// (`InvalidInput`, `Unsupported`, `DimensionMismatch`), numerical breakdown
/// (`Degenerate`, `NoCrossing`, `Numerical`) and insufficient resolution
/// (`Resolution`, `NonRegularValue`, `Chaining`).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("bounds never cross: {0}")]
    NoCrossing(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("insufficient resolution: {0}")]
    Resolution(String),

    #[error("value is not regular for this mesh: {0}")]
    NonRegularValue(String),

    #[error("preimage chaining failed: {0}")]
    Chaining(String),

    #[error("radius {requested} exceeds the distance to the boundary (max valid radius {max_valid})")]
    RadiusTooLarge { requested: f64, max_valid: f64 },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for failures that more resolution (or a perturbed probe) may fix.
    pub fn is_resolution(&self) -> bool {
        matches!(
            self,
            Error::Resolution(_) | Error::NonRegularValue(_) | Error::Chaining(_)
        )
    }

    /// True for failures caused by the caller's parameters.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Unsupported(_)
                | Error::DimensionMismatch { .. }
                | Error::RadiusTooLarge { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
