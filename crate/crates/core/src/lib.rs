//! Tools for studying how ReLU and max pooling make neural networks
//! nonsmooth: a small training engine, smooth synthetic video generators,
//! second-difference detectors, activation probes and statistical models of
//! how nonsmoothness events propagate layer to layer.

pub mod channels;
pub mod error;
pub mod nn;
pub mod nonsmooth;
pub mod probe;
pub mod rng;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor4;
