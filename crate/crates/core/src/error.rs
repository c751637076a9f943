use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("chain order must be at least 1, got {0}")]
    InvalidOrder(usize),
    #[error("homogeneity degree {kappa} outside [-1/r, 1/r] = [{lo}, {hi}] for order {order}")]
    KappaOutOfRange {
        kappa: f64,
        order: usize,
        lo: f64,
        hi: f64,
    },
    #[error("exponent c = {c} must satisfy c >= max(p_i) = {max_p}")]
    ExponentTooSmall { c: f64, max_p: f64 },
    #[error("weights must be positive and finite")]
    InvalidWeights,
    #[error("dilation factor must be positive and finite, got {0}")]
    InvalidDilation(f64),
    #[error("state has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("state contains non-finite entries")]
    NonFiniteState,
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("invalid control law: {0}")]
    InvalidLaw(String),
    #[error("invalid perturbation model: {0}")]
    InvalidModel(String),
    #[error("invalid simulation config: {0}")]
    InvalidSimConfig(String),
    #[error("synthesis failed: {0}")]
    Synthesis(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("trajectory never settled")]
    NotSettled,
}

pub type Result<T> = std::result::Result<T, Error>;
