use thiserror::Error;

/// Errors raised by the scoring, tilting, solving and sampling layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{name} = {value} must lie in (0, 1)")]
    Range { name: &'static str, value: f64 },
    #[error("joint VaR/ES score has no positively homogeneous member of degree b = {b}")]
    UnsupportedDegree { b: f64 },
    #[error("score constant {name} = {value} is not admissible")]
    BadConstant { name: &'static str, value: f64 },
    #[error("({z}, {y}) outside the action domain: {reason}")]
    Domain { z: f64, y: f64, reason: &'static str },
    #[error("prediction has dimension {got}, score expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid weights: {0}")]
    BadWeights(String),
    #[error("epsilon = {0} must be a finite non-negative number")]
    BadEpsilon(f64),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("derivative does not change sign on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("invalid specification: {0}")]
    BadSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("oracle supports at most {max} atoms, got {got}")]
    TooManyAtoms { max: usize, got: usize },
    #[error("grid has {got} points, at least {min} required")]
    GridTooCoarse { min: usize, got: usize },
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0} oracle checks failed")]
    CheckFailed(usize),
}

impl Error {
    /// Whether the error stems from a numerical failure rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite(_)
                | Error::NoSignChange { .. }
                | Error::RankDeficient
                | Error::CheckFailed(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
