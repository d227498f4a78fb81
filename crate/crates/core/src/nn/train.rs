use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamConfig, AdamState};
use super::checkpoint::Checkpoint;
use super::network::{mse, param_slices, Network, NetworkSpec, Setup};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub setup: Setup,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn new(setup: Setup) -> Self {
        TrainConfig {
            setup,
            epochs: 20,
            batch_size: 64,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub best: Checkpoint,
    pub history: Vec<EpochStats>,
}

/// Copies the selected items of `set` into a new batch.
pub fn select_batch(set: &Tensor4, indices: &[usize]) -> Tensor4 {
    let [_, c, h, w] = set.dims();
    let mut data = Vec::with_capacity(indices.len() * set.item_len());
    for &i in indices {
        data.extend_from_slice(set.item(i));
    }
    Tensor4::from_vec([indices.len(), c, h, w], data).expect("item sizes line up")
}

/// Mean reconstruction error over a dataset, evaluated in chunks.
pub fn evaluate_mse(net: &Network, set: &Tensor4, chunk: usize) -> Result<f64> {
    let n = set.batch();
    if n == 0 {
        return Err(Error::Empty("evaluate_mse"));
    }
    let chunk = chunk.max(1);
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let batch = select_batch(set, &idx);
        let out = net.forward(&batch)?;
        total += mse(out.data(), batch.data()) * (end - start) as f64;
        start = end;
    }
    Ok(total / n as f64)
}

/// Trains an autoencoder on `train` (targets equal inputs) with Adam + MSE
/// and keeps the parameters with minimum validation loss. Initialization
/// and shuffling derive from `seed` only, so runs are bit-reproducible.
pub fn train_autoencoder(train: &Tensor4, val: &Tensor4, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    train_network(NetworkSpec::autoencoder(config.setup), train, val, config, seed)
}

pub fn train_network(spec: NetworkSpec, train: &Tensor4, val: &Tensor4, config: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    if train.batch() == 0 {
        return Err(Error::Empty("training set"));
    }
    if val.batch() == 0 {
        return Err(Error::Empty("validation set"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidSpec("epochs and batch size must be positive".into()));
    }
    let mut net = Network::init(spec, derive_seed(seed, 0))?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let mut adam = AdamState::for_params(config.adam, &net.param_slices());
    let mut order: Vec<usize> = (0..train.batch()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = select_batch(train, chunk);
            let (loss, grads) = match net.loss_and_grads(&batch, &batch) {
                Ok(v) => v,
                Err(Error::NonFinite(_)) => return Err(Error::Diverged { epoch, loss: f64::NAN }),
                Err(e) => return Err(e),
            };
            loss_sum += loss * chunk.len() as f64;
            let grad_slices = param_slices(&grads);
            adam.step(&mut net.param_slices_mut(), &grad_slices)?;
        }
        let train_loss = loss_sum / train.batch() as f64;
        let val_loss = match evaluate_mse(&net, val, config.batch_size) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if best.as_ref().is_none_or(|b| val_loss < b.val_loss) {
            best = Some(Checkpoint {
                network: net.clone(),
                seed,
                epoch: epoch as u32,
                val_loss,
            });
        }
    }
    Ok(TrainOutcome {
        best: best.expect("at least one epoch ran"),
        history,
    })
}
