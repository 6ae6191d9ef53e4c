//! Feed-forward binary classifier trained with proximal Adagrad.

pub mod checkpoint;
mod network;
mod optim;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, FORMAT_VERSION};
pub use network::{bce_loss, init_network, Activation, Gradients, Layer, Network, NetworkConfig, DEFAULT_HIDDEN, MAX_HIDDEN_LAYERS};
pub use optim::{prox_adagrad_step, prox_update, OptimizerState, DEFAULT_G0};
pub use train::{evaluate, predict, train, MAX_BATCH, MIN_BATCH, Evaluation, HistoryRecord, Prediction, TrainConfig, TrainHistory, Trainer};
