use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input or configuration. Carries a message naming the offending field.
    #[error("configuration error: {0}")]
    Config(String),

    /// The immersion condition failed: some node has |∂θF| below the frozen threshold.
    #[error("immersion degenerated: min |dF/dtheta| = {min_speed:.3e} at node {node} is below threshold {threshold:.3e}")]
    Degenerate {
        node: usize,
        min_speed: f64,
        threshold: f64,
    },

    /// NaN/Inf, non-positive enclosed volume, failed quadrature and similar.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// True for failures that come from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Degenerate { .. } | Error::Numerical(_))
    }
}
