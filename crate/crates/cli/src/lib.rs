//! Experiment pipeline behind the `nslab` binary: dataset generation,
//! training, AveNonSmooth analysis, channel fitting and prediction, and
//! report assembly. Every command is a pure function of the config, its
//! input files and the master seed.

pub mod analyze;
pub mod channels;
pub mod config;
pub mod data;
pub mod layout;
pub mod report;
pub mod smpcache;
pub mod tables;
pub mod train;

pub use config::{ExperimentConfig, Overrides};
pub use layout::Layout;
