//! Minimal dense networks with hand-written backpropagation and Adam.

mod adam;
mod mlp;
mod train;

pub use adam::{AdamConfig, AdamState};
pub use mlp::{Activation, Mlp};
pub use train::{train_regression, MinibatchOrder, TrainConfig, Trainer};
