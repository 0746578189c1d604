use crate::scalar::{Indeterminate, ParseScalarError};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Indeterminate(#[from] Indeterminate),
    #[error("invalid slab: normal vector is zero")]
    ZeroNormal,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid cube: {0}")]
    InvalidCube(String),
    #[error("invalid interval: {0}")]
    InvalidInterval(String),
    #[error("unknown symbol {symbol} for the map at time {time}")]
    UnknownSymbol { symbol: i64, time: usize },
    #[error("orbit hits a branch boundary at step {step}")]
    BoundaryOrbit { step: usize },
    #[error("point {0} lies outside the map domain")]
    OutsideDomain(String),
    #[error("insufficient certificate: {0}")]
    InsufficientCertificate(String),
    #[error("unsupported assumption: {0}")]
    UnsupportedAssumption(String),
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("gamma must lie in (0,1/3)")]
    InvalidGamma,
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("certificate too weak: {0}")]
    CertificateTooWeak(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("no legal move: {0}")]
    NoLegalMove(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Parse(#[from] ParseScalarError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Invalid user input, as opposed to a runtime failure.
    pub fn is_spec_error(&self) -> bool {
        matches!(
            self,
            Error::Spec(_)
                | Error::Parse(_)
                | Error::Json(_)
                | Error::InvalidGamma
                | Error::InvalidMap(_)
                | Error::InvalidTarget(_)
                | Error::Dimension { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
