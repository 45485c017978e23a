use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not Hermitian (deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("not a binary observable: {0}")]
    InvalidObservable(String),

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("arity mismatch: {0}")]
    ArityMismatch(String),

    #[error("enumeration budget exceeded: {strategies} strategies (limit {limit})")]
    BudgetExceeded { strategies: u128, limit: u128 },

    #[error("word mixes Alice inputs {0} and {1}")]
    MixedAliceInputs(u8, u8),

    #[error("canonical B-word of length {0} exceeds the supported degree")]
    DegreeExceeded(usize),

    #[error("unsupported term: {0}")]
    UnsupportedTerm(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("parameters outside the tilted-CHSH domain: {0}")]
    Domain(String),

    #[error("not a bit: {0}")]
    NotABit(u8),

    #[error("partial model is not pure")]
    NotPure,

    #[error("invalid compiled model: {0}")]
    InvalidModel(String),

    #[error("negative value deficit {0}")]
    NegativeDeficit(f64),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("consistency failure: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
