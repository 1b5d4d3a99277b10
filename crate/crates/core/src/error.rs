use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected} values, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("time step {dt:e} exceeds the {what} stability bound {bound:e}")]
    StabilityViolation { what: &'static str, dt: f64, bound: f64 },

    #[error("pressure solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("binder conservation unreachable: interface band vanished with deficit {deficit:e}")]
    ConservationUnreachable { deficit: f64 },

    #[error("particle packing failed: achieved solid fraction {achieved:.4}, target {target:.4}")]
    PackingFailed { achieved: f64, target: f64 },

    #[error("profile is empty after thresholding")]
    EmptyProfile,

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors raised while parsing or validating input.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidGrid(_)
                | Error::InvalidParameter(_)
                | Error::MalformedFile { .. }
                | Error::DimensionMismatch { .. }
                | Error::PackingFailed { .. }
        )
    }
}
