use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("{0} is not a prime power in 2..=65536")]
    InvalidFieldOrder(u64),

    #[error("division by zero in a finite field")]
    DivisionByZero,

    #[error("{value} is not an element of GF({order})")]
    InvalidElement { value: u32, order: u32 },

    #[error("vector of length {found} presented to a rank state of dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("the infinite field cannot be simulated at vector level")]
    NotSimulatable,

    #[error("rank {rank} exceeds bulk size {bulk}")]
    InvalidRank { rank: usize, bulk: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("p.g.f. argument {w} is within tolerance of the pole at {pole}")]
    PoleProximity { w: Complex64, pole: f64 },

    #[error("arrival rate {lambda} is not below the usable stability limit {limit}")]
    UnstableQueue { lambda: f64, limit: f64 },

    #[error("expected {expected} interior roots, found {found}; candidates: {candidates:?}")]
    RootCountMismatch {
        expected: usize,
        found: usize,
        candidates: Vec<Complex64>,
    },

    #[error("numerically degenerate boundary system: {0}")]
    NumericallyDegenerate(String),

    #[error("coupling violated at slot {slot}: {detail} ({total} violations in total)")]
    CouplingViolation { slot: u64, detail: String, total: u64 },
}
