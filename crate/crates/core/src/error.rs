use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("point ({0}, {1}) lies outside the ambient window")]
    OutsideWindow(f64, f64),
    #[error("duplicate point ({0}, {1}) in a simple configuration")]
    DuplicatePoint(f64, f64),
    #[error("lifespan must be positive and finite, got {0}")]
    InvalidLifespan(f64),
    #[error("invalid interaction: {0}")]
    InvalidSpec(String),
    #[error("quadrature cannot reach tolerance {requested:e} (best achievable {achievable:e})")]
    QuadratureResolution { requested: f64, achievable: f64 },
    #[error("birth rate {rate} escaped the declared envelope [{b_inf}, {b_sup}]")]
    EnvelopeViolation { rate: f64, b_inf: f64, b_sup: f64 },
    #[error("proposal stream does not match simulation options: {0}")]
    StreamMismatch(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("windows are not nested: {0}")]
    NestingViolation(String),
    #[error("observable does not declare a support window")]
    MissingSupport,
    #[error("test function support violation: {0}")]
    SupportViolation(String),
    #[error("lattice with {m} cells exceeds the limit of {max}")]
    LatticeTooLarge { m: usize, max: usize },
    #[error("counting boxes overlap or leave the observation window")]
    OverlappingBoxes,
    #[error("order {requested} requested but only {available} available")]
    OrderUnavailable { requested: usize, available: usize },
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
