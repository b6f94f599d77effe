use thiserror::Error;

/// Errors raised across the crate. Variants carry the failing value where
/// one exists so callers can report it without re-running the computation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid point {0} is not strictly positive")]
    NonPositiveGridPoint(f64),
    #[error("balancing function `{0}` has no trusted supremum bound")]
    MissingSupBound(String),
    #[error("invalid balancing function: {0}")]
    InvalidBalancing(String),

    #[error("state {0} is outside the support of the target")]
    OutOfSupport(String),
    #[error("base kernel assigns zero probability to the move {from} -> {to}")]
    ZeroBaseProbability { from: String, to: String },
    #[error("base kernel has uncountable support; no exact neighbourhood")]
    UncountableSupport,
    #[error("model validation failed: {0}")]
    ModelValidation(String),
    #[error("state {0} does not match the model's state space")]
    StateMismatch(String),

    #[error("jump rate vanishes at state {0}")]
    ZeroRate(String),
    #[error("jump rate overflowed at state {0}")]
    RateOverflow(String),
    #[error("lattice truncation did not converge: {0}")]
    TruncationNotConverged(String),

    #[error("explosion guard tripped after {events} events at time {time}")]
    ExplosionGuard { events: usize, time: f64 },
    #[error("replica {index}: {source}")]
    Replica {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("eigendecomposition failed: {0}")]
    EigenFailure(String),
    #[error("certification failed: {0}")]
    CertificationFailure(String),
    #[error("premise violated: {0}")]
    PremiseViolated(String),
    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("hitting-time premise cannot be exhibited: {0}")]
    PremiseUnverifiable(String),
    #[error("sequence overflow: {0}")]
    Overflow(String),

    #[error("non-finite state reached at step {0}")]
    NonFiniteState(usize),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
