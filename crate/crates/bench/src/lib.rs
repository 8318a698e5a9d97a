//! Experiment harness for the toric-code decoders: paired Monte Carlo
//! accuracy runs, decoder comparisons, threshold sweeps and CSV output.

pub mod csv;
pub mod experiment;
pub mod spec;

pub use toric_core::exact_ml_decode;

pub use experiment::{compare_decoders, crossing, run_accuracy, wilson_interval, AccuracyRecord, Decoder};
pub use spec::ExperimentSpec;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] toric_core::Error),
    #[error(transparent)]
    Neural(#[from] neural_decoder::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("missing checkpoint for L={0}")]
    MissingCheckpoint(usize),
}

impl Error {
    /// Process exit code: 2 for configuration problems, 3 for aborted
    /// training, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MissingCheckpoint(_) | Error::Neural(neural_decoder::Error::Config(_)) => 2,
            Error::Neural(neural_decoder::Error::Diverged { .. } | neural_decoder::Error::NonFinite) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
