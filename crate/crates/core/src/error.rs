use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("enumeration too large: {what} (size {size}, cap {cap})")]
    EnumerationCap {
        what: &'static str,
        size: u64,
        cap: u64,
    },
    #[error("time t = {0} outside [0, 1]")]
    TimeOutOfRange(f64),
    #[error("window length {len} outside 1..={cap}")]
    WindowLength { len: usize, cap: usize },
    #[error("no admissible t0: {0}")]
    NoAdmissibleT0(String),
    #[error("degenerate second derivative g0''(t0) = {0}")]
    DegenerateCurvature(f64),
    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("pattern parse error on line {line}: {msg}")]
    PatternParse { line: usize, msg: String },
    #[error("covariance grid is asymmetric by {0:e}")]
    AsymmetricGrid(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}
