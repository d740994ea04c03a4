use thiserror::Error;

/// Errors raised anywhere in the LODE-GP pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unbound symbol `{0}`")]
    UnboundSymbol(String),
    #[error("singular evaluation: denominator evaluates to {0:e}")]
    SingularEvaluation(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not diagonal")]
    NotDiagonal,
    #[error("cannot compute roots of `{0}`: coefficients depend on parameters")]
    SymbolicRootsUnsupported(String),
    #[error("diagonal entry `{0}` depends on parameters; compile in refactorize mode")]
    NeedsRefactorizeMode(String),
    #[error("covariance matrix is not positive definite after jitter escalation")]
    NotPositiveDefinite,
    #[error("empty channel selection")]
    EmptySelection,
    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize, trace: Vec<f64> },
    #[error("unsupported derivative order {0} (at most 2 supported)")]
    UnsupportedOrder(usize),
    #[error("unknown system `{0}`")]
    UnknownSystem(String),
    #[error("system has no reference solution")]
    NoReferenceSolution,
    #[error("parse error at column {column}: {message}")]
    Parse { column: usize, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
