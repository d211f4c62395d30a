use thiserror::Error;

/// Errors raised by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("gram matrix is numerically singular (condition number {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("basis evaluation matrix is rank deficient ({0})")]
    RankDeficient(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NonConvergence { what: &'static str, iterations: usize },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("rho = {rho} lies outside the admissible interval ({lower}, {upper})")]
    RhoOutOfBounds { rho: f64, lower: f64, upper: f64 },

    #[error("units {first} and {second} share identical coordinates")]
    DuplicateCoordinates { first: usize, second: usize },

    #[error("weight matrix has no real eigenvalue")]
    NoRealEigenvalue,

    #[error("model mismatch: {0}")]
    ModelMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    /// True for failures of the numerics (as opposed to malformed input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularGram { .. }
                | Error::RankDeficient(_)
                | Error::DegenerateData(_)
                | Error::NonConvergence { .. }
                | Error::SingularMatrix(_)
                | Error::RhoOutOfBounds { .. }
                | Error::NoRealEigenvalue
                | Error::ModelMismatch(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
