//! Toric code under bit-flip noise and the classical decoders built on it:
//! a belief-propagation renormalization-group decoder, a minimum-weight
//! perfect-matching decoder and an exact maximum-likelihood oracle for small
//! lattices.

pub mod beliefprop;
pub mod blossom;
pub mod matching;
pub mod oracle;
pub mod rng;
pub mod toric;

pub use beliefprop::{bp_run, remove_complexity, rg_decode, CellMessage, CoarseMarginals, FlipRecord};
pub use matching::{min_weight_matching, mwpm_decode, torus_distance, EdgeWeights, Matching};
pub use oracle::exact_ml_decode;
pub use toric::{
    coarse_error_parity, coarse_syndrome, logical_parity, sample_errors, syndrome_of, CoarseEdgeMap,
    EdgeCoord, ErrorConfig, ErrorRates, Lattice, LogicalParity, Orientation, Syndrome,
};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("lattice size {0} is not a power of two >= 2")]
    InvalidLatticeSize(usize),
    #[error("lattice of size {0} cannot be coarse-grained")]
    CannotCoarsen(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("error rate {0} outside [0, 1]")]
    InvalidRate(f64),
    #[error("belief propagation produced a non-finite message")]
    NonFiniteMessage,
    #[error("odd number of defects ({0}); syndromes on a torus come in pairs")]
    OddDefects(usize),
    #[error("matching weights must be positive, got {0}")]
    NonPositiveWeight(i64),
    #[error("exact decoding supports L <= 4, got {0}")]
    LatticeTooLarge(usize),
    #[error("at least one message-passing round is required")]
    NoRounds,
}

pub type Result<T> = std::result::Result<T, Error>;
