use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (shape mismatch, bad range).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A computation produced or received a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A state transition is not reachable by any in-bounds action.
    #[error("infeasible transition: {0}")]
    InfeasibleTransition(String),

    /// Sampling was requested from an empty replay buffer.
    #[error("empty replay buffer")]
    EmptyBuffer,

    /// Subsampling would retain zero transitions.
    #[error("subsample rate {rate} exceeds the {len} available transitions")]
    EmptySubsample { rate: usize, len: usize },

    /// Input is degenerate for the requested statistic (e.g. zero variance).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A data file is malformed.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Ratio of a positive probability to a zero probability inside a KL term.
    #[error("absolute continuity violated: {0}")]
    AbsoluteContinuity(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

/// Checks that every element of `xs` is finite.
pub fn ensure_finite(xs: &[f64], what: &str) -> Result<()> {
    if let Some(bad) = xs.iter().find(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "{what} contains non-finite value {bad}"
        )));
    }
    Ok(())
}
