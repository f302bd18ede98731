use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("eigenvalue parameter must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("operator polynomial is identically zero")]
    ZeroOperator,
    #[error("boundary matrix has an all-zero row at Lambda = {lambda}")]
    DegenerateMatrix { lambda: f64 },
    #[error("found {found} of {requested} eigenvalues below lambda = {ceiling}")]
    ScanExhausted { requested: usize, found: usize, ceiling: f64 },
    #[error("eigenvalue {lambda} is not refined: null-space quality {quality:e}")]
    Unrefined { lambda: f64, quality: f64 },
    #[error("eigenvalue {lambda} looks non-simple: second pivot ratio {second:e}")]
    NonSimple { lambda: f64, second: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("stone of {0} is not a polynomial: residual {1:e}")]
    BadStone(String, f64),
    #[error("stone-polynomial coefficients disagree across k: {0:e}")]
    StoneInconsistent(f64),
    #[error("Ritz basis error: {0}")]
    Ritz(String),
    #[error("index {index} out of range for sequence of length {len}")]
    IndexOverflow { index: usize, len: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
