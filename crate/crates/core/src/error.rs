use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("field tie structure does not match the crack set: {0}")]
    InconsistentTie(String),
    #[error("linearized tensor is not positive definite on symmetric matrices (min eigenvalue {0:e})")]
    NonPositiveDefinite(f64),
    #[error("singular elastic system: {0}")]
    SingularSystem(String),
    #[error("nonlinear solve did not converge: {0}")]
    NoConvergence(String),
    #[error("time {got} is not after the last recorded time {last}")]
    TimeOrder { last: f64, got: f64 },
    #[error("brute-force enumeration over {0} interfaces exceeds the limit of {1}")]
    TooLarge(usize, usize),
    #[error("mean gradient of component {component} has det {det:e} <= 0")]
    DegenerateMeanGradient { component: usize, det: f64 },
    #[error("frame cell {0} lies outside the cutoff region; eps too large for this loading")]
    FrameExcised(usize),
    #[error("insufficient samples for reflection: {0}")]
    InsufficientSamples(String),
    #[error("time interval [{0}, {1}] outside the trajectory span")]
    OutOfRange(f64, f64),
    #[error("mismatched configurations: {0}")]
    MismatchedConfigs(String),
    #[error("config parse error: {0}")]
    ConfigParse(String),
    #[error("config validation error: {0}")]
    ConfigValidation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidSpec(_)
            | Error::InvalidParams(_)
            | Error::ConfigParse(_)
            | Error::ConfigValidation(_) => 2,
            _ => 1,
        }
    }
}
