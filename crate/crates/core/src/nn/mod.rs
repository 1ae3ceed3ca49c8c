//! Conditional LSTM written from scratch.
//!
//! Two stacked LSTM layers read a window of daily `(value, count)` steps,
//! each concatenated with the collection's 6-dimensional context, and a
//! linear head on the final hidden state predicts the next day. Training is
//! mean squared error with backpropagation through time and Adam.

mod cell;
mod checkpoint;
mod data;
mod generate;
mod model;
mod tensor;
mod train;

use thiserror::Error;

pub use cell::{lstm_cell_forward, CellCache, LstmLayerParams, LstmState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, FORMAT_VERSION, MAGIC};
pub use data::{make_training_set, make_unconditional_set, Example, TrainingSet};
pub use generate::{generate, generate_tokens, seed_window};
pub use model::{backward, decode, encode, forward, predict, ModelParams, Scratch, Step, Tape, INPUT_DIM, SERIES_DIM};
pub use tensor::Tensor;
pub use train::{
    adam_step, init_model, loss_and_grad, randomize, train, train_with, AdamConfig, AdamState, TrainConfig, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{what}: expected {expected}, got {got}")]
    ShapeMismatch { what: &'static str, expected: usize, got: usize },
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("collection `{collection}` has {days} days, need at least {needed}")]
    SeriesTooShort { collection: String, days: usize, needed: usize },
    #[error("no training examples")]
    EmptyData,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl NnError {
    /// Tags a non-finite failure with the training position it occurred at.
    pub(crate) fn at(self, epoch: usize, batch: usize) -> Self {
        match self {
            NnError::NonFinite(what) => NnError::NonFinite(format!("{what} at epoch {epoch} batch {batch}")),
            other => other,
        }
    }
}
