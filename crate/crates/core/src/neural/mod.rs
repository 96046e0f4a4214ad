//! Sine-activated value networks trained on the HJI residual.

mod checkpoint;
mod loss;
mod network;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use loss::{loss_and_gradient, pde_residual, LossTerms, TrainBatch};
pub use network::{init_network, input_normalization, Architecture, Layer, Params, ValueNetwork, Variant};
pub use train::{
    train, train_from, validate_against_oracle, LogRow, TrainConfig, TrainLog, ValidationReport, Validator,
};

#[cfg(test)]
mod tests;
