//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size guard: {what} needs {requested} but the cap is {cap}")]
    SizeGuard {
        what: &'static str,
        requested: u128,
        cap: u128,
    },
    #[error("enumeration cap exceeded: {what} has {requested} configurations (cap {cap}); {hint}")]
    CapExceeded {
        what: &'static str,
        requested: u128,
        cap: u128,
        hint: &'static str,
    },
    #[error("modulus {0} is composite; this operation needs a prime field")]
    CompositeModulus(u32),
    #[error("{0} is not a cycle")]
    NotACycle(&'static str),
    #[error("degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("linear system has no solution")]
    NoSolution,
    #[error("vanishing zero mode on {kind} cell {cell}")]
    VanishingZeroMode { kind: &'static str, cell: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("geometric series diverges: C t e^a = {0} >= 1")]
    Divergent(f64),
    #[error("inconsistent orientation constraints while dualizing")]
    Orientation,
    #[error("missing sector amplitude for label {0}")]
    MissingSector(usize),
    #[error("polymer not found in catalog")]
    UnknownPolymer,
}

pub type Result<T> = std::result::Result<T, Error>;
