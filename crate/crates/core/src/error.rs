use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("negative probability {value:e} at k={index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("not an FCGF: {0}")]
    NotAnFcgf(String),
    #[error("dilation by c={0} unavailable: distribution is not infinitely dilatable")]
    DilationUnavailable(f64),
    #[error("root not bracketed: target {target} outside attainable range ({lo}, {hi})")]
    RootNotBracketed { target: f64, lo: f64, hi: f64 },
    #[error("incomplete table: tail bound {tail_bound:e} exceeds tolerance {tol:e}")]
    IncompleteTable { tail_bound: f64, tol: f64 },
    #[error("unknown family '{0}'")]
    UnknownFamily(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("decomposition infeasible: {0}")]
    Infeasible(String),
    #[error("truncation budget exceeded: {0}")]
    TruncationBudget(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
