use thiserror::Error;

/// Errors raised anywhere in the inference stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("parameter {theta:?} outside prior support of benchmark `{benchmark}`")]
    OutOfSupport { benchmark: String, theta: Vec<f64> },
    #[error("simulator `{benchmark}` failed at theta {theta:?} after {attempts} attempts: {reason}")]
    SimulatorFailure {
        benchmark: String,
        theta: Vec<f64>,
        attempts: usize,
        reason: String,
    },
    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("training diverged: {0}")]
    TrainingDiverged(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("sampler failure: {0}")]
    SamplerFailure(String),
    #[error("estimator was fit to a single observation and cannot be evaluated at a different x")]
    ObservationMismatch,
    #[error("estimator density is unnormalized: {0}")]
    Unnormalized(String),
    #[error("level {0} not present in coverage curve")]
    MissingLevel(f64),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
