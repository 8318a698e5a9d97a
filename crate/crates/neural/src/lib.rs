//! Neural renormalization-group decoder for the toric code: the block
//! architecture, checkpoints, datasets and the staged training pipeline.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod model;
pub mod post;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::TrainConfig;
pub use model::{build_block, encode_input, BlockRole, DecoderModel};
pub use train::{calibrate_site_rates, model_from_pretrained, train_dense, train_global, train_stage0, Stage0Report, TrainLog};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] toric_core::Error),
    #[error(transparent)]
    Tensor(#[from] tensornet::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("config: {0}")]
    Config(String),
    #[error("model is built for L={model}, input has L={input}")]
    SizeMismatch { model: usize, input: usize },
    #[error("non-finite activations")]
    NonFinite,
    #[error("{stage} diverged at batch {batch} (loss {loss}); config:\n{config}")]
    Diverged { stage: &'static str, batch: usize, loss: f64, config: String },
}

pub type Result<T> = std::result::Result<T, Error>;
