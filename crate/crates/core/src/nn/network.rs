use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    activation_apply, activation_backward, conv2d_backward, conv2d_forward, pool_backward, pool_forward,
    transpose_conv2d_backward, transpose_conv2d_forward, Activation, ConvSpec, LayerSpec, PoolKind,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// The two building-block setups compared throughout: nonsmooth ReLU + max
/// pooling against smooth softplus + average pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Setup {
    ReluMaxPool,
    SoftplusAvePool,
}

impl Setup {
    pub const ALL: [Setup; 2] = [Setup::ReluMaxPool, Setup::SoftplusAvePool];

    pub fn activation(self) -> Activation {
        match self {
            Setup::ReluMaxPool => Activation::Relu,
            Setup::SoftplusAvePool => Activation::Softplus,
        }
    }

    pub fn pool_kind(self) -> PoolKind {
        match self {
            Setup::ReluMaxPool => PoolKind::Max,
            Setup::SoftplusAvePool => PoolKind::Average,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Setup::ReluMaxPool => "relu_maxpool",
            Setup::SoftplusAvePool => "softplus_avepool",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Setup> {
        Setup::ALL.into_iter().find(|s| s.tag() == tag)
    }
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Layer stack plus the input shape `(channels, height, width)` it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_shape: [usize; 3],
    pub layers: Vec<LayerSpec>,
    pub setup: Setup,
}

impl NetworkSpec {
    /// The 28×28 autoencoder: two conv+act+pool encoder stages, three
    /// transpose-conv decoder stages, identity output.
    pub fn autoencoder(setup: Setup) -> Self {
        let act = LayerSpec::Activation(setup.activation());
        let pool = LayerSpec::Pool {
            kind: setup.pool_kind(),
            size: 2,
            stride: 2,
        };
        NetworkSpec {
            input_shape: [1, 28, 28],
            layers: vec![
                LayerSpec::Conv(ConvSpec::new(1, 8, 3, 1, 1)),
                act,
                pool,
                LayerSpec::Conv(ConvSpec::new(8, 16, 3, 1, 1)),
                act,
                pool,
                LayerSpec::TransposeConv(ConvSpec::new(16, 16, 3, 2, 1).with_output_padding(1)),
                act,
                LayerSpec::TransposeConv(ConvSpec::new(16, 8, 3, 2, 1).with_output_padding(1)),
                act,
                LayerSpec::TransposeConv(ConvSpec::new(8, 1, 3, 1, 1)),
                LayerSpec::Activation(Activation::Identity),
            ],
            setup,
        }
    }

    /// Shapes at every layer boundary; entry `i` is the input of layer `i`,
    /// the last entry is the network output.
    pub fn boundary_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let mut shapes = Vec::with_capacity(self.layers.len() + 1);
        let mut shape = self.input_shape;
        shapes.push(shape);
        for layer in &self.layers {
            shape = layer.output_shape(shape)?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<[usize; 3]> {
        Ok(*self.boundary_shapes()?.last().expect("at least the input boundary"))
    }

    /// Checks channel chaining and that every nonlinearity matches the setup
    /// tag (identity activations are allowed in either setup).
    pub fn validate(&self) -> Result<()> {
        self.boundary_shapes()?;
        for layer in &self.layers {
            match *layer {
                LayerSpec::Activation(a) if a != Activation::Identity && a != self.setup.activation() => {
                    return Err(Error::InvalidSpec(format!("activation {a:?} does not belong to setup {}", self.setup)));
                }
                LayerSpec::Pool { kind, .. } if kind != self.setup.pool_kind() => {
                    return Err(Error::InvalidSpec(format!("pooling {kind:?} does not belong to setup {}", self.setup)));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Kernel and bias of one conv or transpose-conv layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub kernel: Tensor4,
    pub bias: Vec<f64>,
}

/// A network spec with concrete parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<Option<LayerParams>>,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `activations[i]` is the input of layer `i`; the last one is the output.
    pub activations: Vec<Tensor4>,
    routings: Vec<Vec<usize>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor4 {
        self.activations.last().expect("trace holds the input at least")
    }
}

impl Network {
    pub fn new(spec: NetworkSpec, params: Vec<Option<LayerParams>>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.layers.len() {
            return Err(Error::shape("Network::new params", spec.layers.len(), params.len()));
        }
        for (layer, p) in spec.layers.iter().zip(&params) {
            match (layer.kernel_dims(), p) {
                (Some(dims), Some(p)) => {
                    if p.kernel.dims() != dims || Some(p.bias.len()) != layer.out_channels() {
                        return Err(Error::shape("Network::new kernel", dims, p.kernel.dims()));
                    }
                }
                (None, None) => {}
                _ => return Err(Error::InvalidSpec(format!("parameter presence mismatch for {layer:?}"))),
            }
        }
        Ok(Network { spec, params })
    }

    /// Seeded uniform fan-in initialization: He-style bounds for ReLU,
    /// Xavier-style for softplus. Biases start at zero.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = spec
            .layers
            .iter()
            .map(|layer| {
                let dims = layer.kernel_dims()?;
                let (c_in, c_out) = match layer {
                    LayerSpec::Conv(c) | LayerSpec::TransposeConv(c) => (c.in_channels, c.out_channels),
                    _ => unreachable!(),
                };
                let area = (dims[2] * dims[3]) as f64;
                let fan_in = c_in as f64 * area;
                let fan_out = c_out as f64 * area;
                let bound = match spec.setup {
                    Setup::ReluMaxPool => (6.0 / fan_in).sqrt(),
                    Setup::SoftplusAvePool => (6.0 / (fan_in + fan_out)).sqrt(),
                };
                let n: usize = dims.iter().product();
                let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
                Some(LayerParams {
                    kernel: Tensor4::from_vec(dims, data).expect("dims match"),
                    bias: vec![0.0; c_out],
                })
            })
            .collect();
        Ok(Network { spec, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Option<LayerParams>] {
        &self.params
    }

    pub fn layer_params(&self, layer: usize) -> Option<&LayerParams> {
        self.params.get(layer).and_then(Option::as_ref)
    }

    fn check_input(&self, input: &Tensor4) -> Result<()> {
        let [_, c, h, w] = input.dims();
        if [c, h, w] != self.spec.input_shape {
            return Err(Error::shape("network input", input.dims(), self.spec.input_shape));
        }
        Ok(())
    }

    fn apply_layer(&self, idx: usize, x: &Tensor4) -> Result<(Tensor4, Vec<usize>)> {
        let layer = &self.spec.layers[idx];
        match *layer {
            LayerSpec::Conv(c) => {
                let p = self.params[idx].as_ref().expect("validated");
                Ok((conv2d_forward(x, &p.kernel, &p.bias, c.stride, c.padding)?, Vec::new()))
            }
            LayerSpec::TransposeConv(c) => {
                let p = self.params[idx].as_ref().expect("validated");
                let y = transpose_conv2d_forward(x, &p.kernel, &p.bias, c.stride, c.padding, c.output_padding)?;
                Ok((y, Vec::new()))
            }
            LayerSpec::Activation(a) => Ok((activation_apply(x, a), Vec::new())),
            LayerSpec::Pool { kind, size, stride } => {
                let pooled = pool_forward(x, kind, size, stride)?;
                Ok((pooled.output, pooled.routing))
            }
        }
    }

    pub fn forward(&self, input: &Tensor4) -> Result<Tensor4> {
        self.check_input(input)?;
        let mut x = input.clone();
        for idx in 0..self.spec.layers.len() {
            x = self.apply_layer(idx, &x)?.0;
        }
        x.ensure_finite("network forward")?;
        Ok(x)
    }

    /// Forward pass keeping every boundary activation.
    pub fn forward_trace(&self, input: &Tensor4) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut activations = vec![input.clone()];
        let mut routings = Vec::with_capacity(self.spec.layers.len());
        for idx in 0..self.spec.layers.len() {
            let (y, routing) = self.apply_layer(idx, activations.last().expect("non-empty"))?;
            activations.push(y);
            routings.push(routing);
        }
        activations.last().expect("non-empty").ensure_finite("network forward")?;
        Ok(ForwardTrace { activations, routings })
    }

    /// Parameter gradients (and the input gradient) for a given output gradient.
    pub fn backward(&self, trace: &ForwardTrace, grad_output: &Tensor4) -> Result<(Vec<Option<LayerParams>>, Tensor4)> {
        if grad_output.dims() != trace.output().dims() {
            return Err(Error::shape("network backward", grad_output.dims(), trace.output().dims()));
        }
        let mut grads: Vec<Option<LayerParams>> = vec![None; self.spec.layers.len()];
        let mut g = grad_output.clone();
        for idx in (0..self.spec.layers.len()).rev() {
            let x = &trace.activations[idx];
            g = match self.spec.layers[idx] {
                LayerSpec::Conv(c) => {
                    let p = self.params[idx].as_ref().expect("validated");
                    let (dx, dk, db) = conv2d_backward(x, &p.kernel, &g, c.stride, c.padding)?;
                    grads[idx] = Some(LayerParams { kernel: dk, bias: db });
                    dx
                }
                LayerSpec::TransposeConv(c) => {
                    let p = self.params[idx].as_ref().expect("validated");
                    let (dx, dk, db) = transpose_conv2d_backward(x, &p.kernel, &g, c.stride, c.padding)?;
                    grads[idx] = Some(LayerParams { kernel: dk, bias: db });
                    dx
                }
                LayerSpec::Activation(a) => activation_backward(x, &g, a)?,
                LayerSpec::Pool { kind, size, stride } => pool_backward(x.dims(), &g, kind, size, stride, &trace.routings[idx])?,
            };
        }
        Ok((grads, g))
    }

    /// Mean squared error against `target` and its parameter gradients.
    pub fn loss_and_grads(&self, input: &Tensor4, target: &Tensor4) -> Result<(f64, Vec<Option<LayerParams>>)> {
        let trace = self.forward_trace(input)?;
        let out = trace.output();
        if out.dims() != target.dims() {
            return Err(Error::shape("loss target", out.dims(), target.dims()));
        }
        let n = out.len() as f64;
        let loss = mse(out.data(), target.data());
        if !loss.is_finite() {
            return Err(Error::NonFinite("loss"));
        }
        let grad: Vec<f64> = out.data().iter().zip(target.data()).map(|(o, t)| 2.0 * (o - t) / n).collect();
        let grad = Tensor4::from_vec(out.dims(), grad)?;
        let (grads, _) = self.backward(&trace, &grad)?;
        Ok((loss, grads))
    }

    /// Flat views over every kernel and bias, in layer order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        param_slices_mut(&mut self.params)
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        param_slices(&self.params)
    }
}

pub fn param_slices(params: &[Option<LayerParams>]) -> Vec<&[f64]> {
    params
        .iter()
        .flatten()
        .flat_map(|p| [p.kernel.data(), p.bias.as_slice()])
        .collect()
}

pub fn param_slices_mut(params: &mut [Option<LayerParams>]) -> Vec<&mut [f64]> {
    params
        .iter_mut()
        .flatten()
        .flat_map(|p| [p.kernel.data_mut(), p.bias.as_mut_slice()])
        .collect()
}

/// Mean squared error over all elements.
pub fn mse(output: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(output.len(), target.len());
    let sum: f64 = output.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum();
    sum / output.len() as f64
}
