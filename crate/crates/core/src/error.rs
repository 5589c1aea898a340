use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("congested equilibrium: rho_0 = {rho_0} must be below rho_max / 2 = {critical}")]
    CongestedEquilibrium { rho_0: f64, critical: f64 },

    #[error("V >= 0: uncontrollable setup (V = {v})")]
    Uncontrollable { v: f64 },

    #[error("density {value} outside [0, {rho_max}]")]
    DensityOutOfRange { value: f64, rho_max: f64 },

    #[error("position z = {z} outside [0, {length}]")]
    PositionOutOfRange { z: f64, length: f64 },

    #[error("grid mismatch: expected {expected} values, got {actual}")]
    GridMismatch { expected: usize, actual: usize },

    #[error("CFL violation: dt = {dt} exceeds stable limit {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("solver abort at t = {time}: {reason}")]
    SolverAbort { time: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("q0 = {q0}: {source}")]
    SweepMember { q0: f64, source: Box<Error> },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
