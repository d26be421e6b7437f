use thiserror::Error;

/// Every failure mode the laboratory can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum WmError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("CFL violation: step {step:.3e} exceeds limit {limit:.3e}")]
    CflViolation { step: f64, limit: f64 },
    #[error("blowup detected at t = {t}: max |u| = {max_abs:.3e}")]
    BlowupDetected { t: f64, max_abs: f64 },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("parity error: {0}")]
    Parity(String),
    #[error("unsupported derivative order {0}")]
    Order(usize),
    #[error("support error: {0}")]
    Support(String),
    #[error("series divergence: {0}")]
    SeriesDivergence(String),
    #[error("integration failure: {0}")]
    IntegrationFailure(String),
    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("overflow: norm {0:.3e} exceeded the growth ceiling")]
    Overflow(f64),
    #[error("bracket error: {0}")]
    Bracket(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error at {location}: {message}")]
    Config { location: String, message: String },
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, WmError>;

impl From<std::io::Error> for WmError {
    fn from(e: std::io::Error) -> Self {
        WmError::Io(e.to_string())
    }
}
