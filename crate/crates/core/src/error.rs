use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0} did not converge")]
    NotConverged(&'static str),

    #[error("matrix is not Hurwitz (max real eigenvalue {0:.3e})")]
    NotHurwitz(f64),

    #[error("singular matrix in {0}")]
    Singular(&'static str),

    #[error("invalid dilation: {0}")]
    InvalidDilation(String),

    #[error("undefined at the origin: {0}")]
    AtOrigin(&'static str),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("infeasible {stage}: {detail}")]
    Infeasible { stage: &'static str, detail: String },

    #[error("integration step underflow at t = {t:.6e} (state {state:?})")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("non-finite derivative at t = {0:.6e}")]
    NonFiniteDerivative(f64),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::Dimension {
            context,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
