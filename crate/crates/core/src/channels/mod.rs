//! Propagation models for nonsmoothness events through individual layers,
//! their fitting from paired SMP data, and Monte Carlo simulation.

mod conv;
mod maxpool;
mod params;
mod pipeline;
mod relu;
mod stats;

pub use conv::{estimate_w0, predict_conv_smp, ConvChannelModel, ConvKind, WeightMode};
pub use maxpool::{fit_maxpool_channel, sample_maxpool_channel, MaxPoolChannelParams, MixtureBranch, SmallBranch, DEFAULT_SPLIT};
pub use params::ChannelParams;
pub use pipeline::{monte_carlo_pipeline, PoolStage};
pub use relu::{eps_zero_for, fit_relu_channel, sample_relu_channel, ReluChannelParams};
pub use stats::{linreg_r2, pearson, wasserstein1, LinearFit, PearsonAccumulator, RegressionResult};

/// Fewest pairs accepted for fitting a channel or a channel branch.
pub const MIN_PAIRS: usize = 10;

pub(crate) fn gaussian(rng: &mut impl rand::Rng, mean: f64, std: f64) -> f64 {
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    mean + std * z
}
