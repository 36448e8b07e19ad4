use thiserror::Error;

/// Errors raised by the simulator and beamformers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("sampling error: {0}")]
    Sampling(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("capability error: {0}")]
    Capability(String),
    #[error("no signal: {0}")]
    NoSignal(String),
    #[error("no target: {0}")]
    NoTarget(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
