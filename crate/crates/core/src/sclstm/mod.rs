//! Sparse-connected LSTM: masked G-layer and h-layer feeding a shared
//! two-layer LSTM block, with hand-written backpropagation through time
//! and an Adam trainer.

mod adam;
mod checkpoint;
mod lstm;
mod mask;
mod model;
mod tensor;
mod train;

#[cfg(test)]
mod tests;

use thiserror::Error;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use lstm::{lstm_cell_forward, lstm_sequence_backward, lstm_sequence_forward, Dense, LstmCache, LstmLayer, GATES};
pub use mask::{build_masks, sparse_layer_forward, stacked_index, MaskedLinear, SparseMask};
pub use model::{
    batch_loss, g_layer_input, loss_mse, sclstm_backward, sclstm_forward, stack_complex, unstack_matrix, Dims, SampleInput,
    SclstmOutput, SclstmParams, TrainingSample,
};
pub use tensor::{sigmoid, Mat};
pub use train::{train, train_from, write_history_csv, HistoryRow, TrainConfig, TrainOutcome};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SclstmError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("weight ({row}, {col}) lies outside the sparse mask")]
    MaskViolation { row: usize, col: usize },
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
}
