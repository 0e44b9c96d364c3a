use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PpmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// The second derivative of the inner dual objective vanished while
    /// locating the optimal offset.
    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("count overflow: {0}")]
    Overflow(String),

    #[error("refused: {0}")]
    Refused(String),

    #[error("solver diverged: {0}")]
    Diverged(String),
}

pub type Result<T> = std::result::Result<T, PpmError>;

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(PpmError::InvalidInput(format!(
            "{what} entry {i} is not finite ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}
