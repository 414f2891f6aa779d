use thiserror::Error;

/// Errors raised by the solvers and the assimilation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("coordinate {x} outside [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("field has no sign change (no price)")]
    NoPrice,
    #[error("field has {0} sign changes (ambiguous price)")]
    AmbiguousPrice(usize),
    #[error("zero pivot in row {row}")]
    SingularSystem { row: usize },
    #[error("initial datum violates the sign condition: {0}")]
    IncompatibleInitialDatum(String),
    #[error("initial price offset {offset} is not an integer multiple of the transaction cost {cost}")]
    MisalignedTransform { offset: f64, cost: f64 },
    #[error("non-positive transaction rate {rate} at price {price}")]
    HopfViolation { rate: f64, price: f64 },
    #[error("price {price} at t = {t} left the admissible band [{lo}, {hi}]")]
    PriceEscaped { t: f64, price: f64, lo: f64, hi: f64 },
    #[error("shifted point {x} lies outside the {side} subdomain")]
    ShiftOutOfDomain { x: f64, side: &'static str },
    #[error("reconstruction cannot be cleaned into an admissible density: {0}")]
    IncompatibleReconstruction(String),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("descent diverged after {iterations} iterations (alpha = {alpha}); reduce beta0 or alpha")]
    Diverged { iterations: usize, alpha: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
