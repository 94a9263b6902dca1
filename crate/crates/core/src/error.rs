use thiserror::Error;

/// Errors raised by problem construction, coefficient lookup and the solvers.
///
/// Out-of-tolerance validation results are never errors; they are reported
/// through the corresponding report types instead.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StorkError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error(
        "unsupported ROCK4 degree {requested} (nearest supported: {})",
        nearest_to_string(.below, .above)
    )]
    UnsupportedDegree {
        requested: usize,
        below: Option<usize>,
        above: Option<usize>,
    },

    #[error("non-finite state reached at grid index {index}")]
    NonFinite { index: usize },

    #[error("coefficient table: {0}")]
    Table(String),
}

fn nearest_to_string(below: &Option<usize>, above: &Option<usize>) -> String {
    match (below, above) {
        (Some(b), Some(a)) => format!("{b} or {a}"),
        (Some(b), None) => b.to_string(),
        (None, Some(a)) => a.to_string(),
        (None, None) => "none".to_string(),
    }
}

pub type Result<T> = std::result::Result<T, StorkError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(StorkError::Config(msg.into()))
}
