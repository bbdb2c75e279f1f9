use thiserror::Error;

/// Errors produced by the transport kernels, the model, and the fitter.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    #[error("bandwidth must be positive and finite, got {0}")]
    InvalidBandwidth(f64),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("probability level {0} outside [0, 1]")]
    LevelOutOfRange(f64),

    #[error("domain mismatch: [{0}, {1}] vs [{2}, {3}]")]
    DomainMismatch(f64, f64, f64, f64),

    #[error("not cyclically monotone: map decreases at node {node} ({left} > {right})")]
    NotMonotone { node: usize, left: f64, right: f64 },

    #[error("map leaves the domain at node {node}: value {value} outside [{lo}, {hi}]")]
    OutOfDomain { node: usize, value: f64, lo: f64, hi: f64 },

    #[error("knot span too small: potential range [{min}, {max}] exceeds knots [{lo}, {hi}]")]
    KnotSpan { min: f64, max: f64, lo: f64, hi: f64 },

    #[error("empty input list")]
    EmptyInput,

    #[error("weights sum to {0}, expected 1")]
    BadWeights(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("step size too large: loss increased for {0} consecutive iterations")]
    StepTooLarge(usize),

    #[error("too many sign configurations: p = {0} exceeds 16")]
    TooManySigns(usize),

    #[error("grid too large for brute-force transport: {nx}x{ny} exceeds {max}x{max}")]
    GridTooLarge { nx: usize, ny: usize, max: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
