use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("qubit index {index} out of range for a {width}-qubit register")]
    QubitOutOfRange { index: usize, width: usize },
    #[error("register of {0} qubits exceeds the supported maximum of 20")]
    TooManyQubits(usize),
    #[error("invalid gate: {0}")]
    InvalidGate(String),
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("{gate} gate requires a rotation angle")]
    MissingAngle { gate: &'static str },
    #[error("{gate} gate does not take a rotation angle")]
    UnexpectedAngle { gate: &'static str },
    #[error("expected {expected} parameters, got {actual}")]
    ParameterCount { expected: usize, actual: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("shot count must be positive")]
    ZeroShots,
    #[error("a circuit stack needs at least one copy")]
    EmptyStack,
    #[error("coordinate {value} outside domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("collocation grid is empty")]
    EmptyGrid,
    #[error("unknown benchmark '{0}'")]
    UnknownBenchmark(String),
    #[error("characteristics cross: a*t + 1 = {0} <= 0")]
    Shock(f64),
    #[error("shot schedule has no stages")]
    EmptySchedule,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
