use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid block layout: {0}")]
    InvalidLayout(String),
    #[error("block index {index} out of range for {blocks} blocks")]
    BlockIndex { index: usize, blocks: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("problem constants are unknown; an explicit step size is required")]
    UnknownConstants,
    #[error("no exact best response available for player {0}")]
    NoBestResponse(usize),
    #[error("unknown problem `{0}`")]
    UnknownProblem(String),
    #[error("no closed form registered for `{0}`")]
    NoClosedForm(String),
    #[error("ratio undefined at a point with D = {0:e}")]
    UndefinedRatio(f64),
    #[error("closed loop is unstable (spectral radius {0})")]
    Unstable(f64),
    #[error("{what} did not converge within {iters} iterations (residual {residual:e})")]
    NoConvergence { what: &'static str, iters: usize, residual: f64 },
    #[error("singular linear system in {0}")]
    Singular(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
