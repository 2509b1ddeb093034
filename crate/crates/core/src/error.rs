use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("root search for mode {mode} failed to bracket a sign change")]
    Bracketing { mode: usize },

    #[error("Riccati iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("Newton iteration for closed-loop mode {mode} diverged")]
    NewtonDiverged { mode: usize },

    #[error("linear system for the degree-{degree} cost tensor is singular")]
    SingularSystem { degree: usize },

    #[error("could not isolate the stabilizing Riccati solution: {reason}")]
    AreSolveFailure { reason: String },

    #[error("non-finite state encountered at t = {time}")]
    NonFiniteState { time: f64 },

    #[error("verdict is not monotone in the level: {converged} converges but {diverged} diverges")]
    NonMonotoneVerdict { converged: f64, diverged: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("i/o error: {0}")]
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
        Error::InvalidInput(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
