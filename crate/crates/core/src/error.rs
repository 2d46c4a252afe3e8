use thiserror::Error;

pub type Result<T, E = OpeError> = std::result::Result<T, E>;

/// Every failure surfaced by the library. [`OpeError::name`] gives a stable
/// machine-readable tag for each variant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OpeError {
    #[error("behavior policy gives zero probability to logged action {action} in state {state}")]
    ZeroPropensity { state: usize, action: usize },

    #[error("importance weights have zero empirical mean")]
    DegenerateWeights,

    #[error("cumulative importance ratio is not finite at step {step}")]
    RatioOverflow { step: usize },

    #[error("design matrix is rank deficient")]
    SingularDesign,

    #[error("solver diverged: {0}")]
    SolverDiverged(String),

    #[error("starting point is not strictly feasible")]
    InfeasibleStart,

    #[error("action {action} is invalid for an action set of size {n_actions}")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("state out of bounds: {0}")]
    OutOfBounds(String),

    #[error("empty input")]
    EmptyInput,

    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl OpeError {
    pub fn name(&self) -> &'static str {
        match self {
            OpeError::ZeroPropensity { .. } => "ZeroPropensity",
            OpeError::DegenerateWeights => "DegenerateWeights",
            OpeError::RatioOverflow { .. } => "RatioOverflow",
            OpeError::SingularDesign => "SingularDesign",
            OpeError::SolverDiverged(_) => "SolverDiverged",
            OpeError::InfeasibleStart => "InfeasibleStart",
            OpeError::InvalidAction { .. } => "InvalidAction",
            OpeError::OutOfBounds(_) => "OutOfBounds",
            OpeError::EmptyInput => "EmptyInput",
            OpeError::Parse { .. } => "ParseError",
            OpeError::InvalidData(_) => "InvalidData",
            OpeError::InvalidConfig(_) => "InvalidConfig",
            OpeError::Io(_) => "IoError",
        }
    }
}

impl From<std::io::Error> for OpeError {
    fn from(e: std::io::Error) -> Self {
        OpeError::Io(e.to_string())
    }
}
