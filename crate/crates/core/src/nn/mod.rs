//! Minimal deterministic deep-learning engine for small conv autoencoders.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::Checkpoint;
pub use layers::{
    activation_apply, conv2d_forward, pool_forward, softplus, transpose_conv2d_forward, Activation, ConvSpec, LayerSpec,
    PoolKind,
};
pub use network::{mse, LayerParams, Network, NetworkSpec, Setup};
pub use train::{evaluate_mse, train_autoencoder, train_network, EpochStats, TrainConfig, TrainOutcome};
