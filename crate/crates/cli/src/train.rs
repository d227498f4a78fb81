//! `train`: R realizations per setup, each with its own derived seed.

use nslab::nn::{train_autoencoder, AdamConfig, Checkpoint, EpochStats, Setup, TrainConfig};
use nslab::rng::derive_labeled;
use nslab::Result;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::load_sets;
use crate::layout::Layout;
use crate::tables::{write_table, LOSS};

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub setup: Setup,
    pub realization: usize,
    pub seed: u64,
    pub best_epoch: u32,
    pub best_val_loss: f64,
    pub history: Vec<EpochStats>,
}

pub fn run_seed(master: u64, setup: Setup, realization: usize) -> u64 {
    derive_labeled(master, setup.tag(), realization as u64)
}

pub fn runs(cfg: &ExperimentConfig) -> Vec<(Setup, usize)> {
    cfg.train.setups.iter().flat_map(|&s| (0..cfg.train.realizations).map(move |r| (s, r))).collect()
}

pub fn train(cfg: &ExperimentConfig) -> Result<Vec<TrainedRun>> {
    let layout = Layout::new(&cfg.out);
    let (train_set, val_set) = load_sets(&layout)?;
    std::fs::create_dir_all(layout.root().join("models"))?;
    runs(cfg)
        .into_par_iter()
        .map(|(setup, r)| {
            let config = TrainConfig {
                setup,
                epochs: cfg.train.epochs,
                batch_size: cfg.train.batch_size,
                adam: AdamConfig {
                    lr: cfg.train.learning_rate,
                    ..AdamConfig::default()
                },
            };
            let seed = run_seed(cfg.seed, setup, r);
            let outcome = train_autoencoder(&train_set, &val_set, &config, seed)?;
            outcome.best.save(&layout.checkpoint(setup, r))?;
            let rows: Vec<Vec<String>> = outcome
                .history
                .iter()
                .map(|e| vec![e.epoch.to_string(), e.train_loss.to_string(), e.val_loss.to_string()])
                .collect();
            write_table(&layout.loss_csv(setup, r), &LOSS, &rows)?;
            Ok(TrainedRun {
                setup,
                realization: r,
                seed,
                best_epoch: outcome.best.epoch,
                best_val_loss: outcome.best.val_loss,
                history: outcome.history,
            })
        })
        .collect()
}

pub fn load_checkpoint(layout: &Layout, setup: Setup, r: usize) -> Result<Checkpoint> {
    let path = layout.checkpoint(setup, r);
    if !path.exists() {
        return Err(nslab::Error::MissingInput(vec![path]));
    }
    Checkpoint::load(&path)
}
