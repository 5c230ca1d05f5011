//! Encoder-decoder LSTM regressor, trained with Adam on per-timestep MSE.

mod adam;
mod checkpoint;
mod lstm;
mod model;
mod scalar;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{train_checkpoint, AnyCheckpoint, Checkpoint};
pub use lstm::{layer_backward, layer_forward, lstm_cell_step, Gate, LayerCache, LstmCellState, LstmParams};
pub use model::{
    DenseLayer, EncoderDecoderConfig, EncoderDecoderModel, ForwardCache, Parameters, TargetTransform,
    DEFAULT_DENSE_WIDTHS, SWEEP_CONFIGS,
};
pub use scalar::{sigmoid, Precision, Scalar};
pub use train::{train, train_new, DatasetPredictions, EpochStats, TrainConfig, TrainOutcome, TrainReport};

#[cfg(test)]
mod gradient_tests;
