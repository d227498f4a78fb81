//! Finite-difference checks of every backward pass against its forward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    activation_apply, activation_backward, conv2d_backward, conv2d_forward, pool_backward, pool_forward,
    transpose_conv2d_backward, transpose_conv2d_forward, Activation, ConvSpec, LayerSpec, PoolKind,
};
use super::network::{mse, Network, NetworkSpec, Setup};
use crate::error::Result;
use crate::tensor::Tensor4;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

pub fn random_tensor(rng: &mut impl Rng, dims: [usize; 4]) -> Tensor4 {
    let n = dims.iter().product();
    Tensor4::from_vec(dims, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized from dims")
}

/// Central differences of `f` with respect to every entry of `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// `||a - n|| / max(||a||, ||n||)`, zero when both vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Worst relative error seen for one layer kind.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub kind: String,
    pub cases: usize,
    pub max_error: f64,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_error < FD_TOLERANCE
    }
}

fn with_data(t: &Tensor4, data: &[f64]) -> Tensor4 {
    Tensor4::from_vec(t.dims(), data.to_vec()).expect("same length")
}

fn conv_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (c_in, c_out) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let k = [1, 3][rng.gen_range(0..2)];
    let (s, p) = (rng.gen_range(1..=2), rng.gen_range(0..=k / 2));
    let x = random_tensor(rng, [2, c_in, 5, 6]);
    let kernel = random_tensor(rng, [c_out, c_in, k, k]);
    let bias: Vec<f64> = (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = random_tensor(rng, conv2d_forward(&x, &kernel, &bias, s, p)?.dims());
    let loss = |x: &Tensor4, k: &Tensor4, b: &[f64]| conv2d_forward(x, k, b, s, p).and_then(|y| y.dot(&g)).expect("valid shapes");
    let (dx, dk, db) = conv2d_backward(&x, &kernel, &g, s, p)?;
    Ok([
        relative_error(dx.data(), &numeric_grad(x.data(), |v| loss(&with_data(&x, v), &kernel, &bias))),
        relative_error(dk.data(), &numeric_grad(kernel.data(), |v| loss(&x, &with_data(&kernel, v), &bias))),
        relative_error(&db, &numeric_grad(&bias, |v| loss(&x, &kernel, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

fn tconv_case(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (c_in, c_out) = (rng.gen_range(1..=3), rng.gen_range(1..=3));
    let s = rng.gen_range(1..=2);
    let p = rng.gen_range(0..=1);
    let op = rng.gen_range(0..s);
    let x = random_tensor(rng, [2, c_in, 3, 4]);
    let kernel = random_tensor(rng, [c_in, c_out, 3, 3]);
    let bias: Vec<f64> = (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let g = random_tensor(rng, transpose_conv2d_forward(&x, &kernel, &bias, s, p, op)?.dims());
    let loss = |x: &Tensor4, k: &Tensor4, b: &[f64]| {
        transpose_conv2d_forward(x, k, b, s, p, op).and_then(|y| y.dot(&g)).expect("valid shapes")
    };
    let (dx, dk, db) = transpose_conv2d_backward(&x, &kernel, &g, s, p)?;
    Ok([
        relative_error(dx.data(), &numeric_grad(x.data(), |v| loss(&with_data(&x, v), &kernel, &bias))),
        relative_error(dk.data(), &numeric_grad(kernel.data(), |v| loss(&x, &with_data(&kernel, v), &bias))),
        relative_error(&db, &numeric_grad(&bias, |v| loss(&x, &kernel, v))),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

fn activation_case(rng: &mut ChaCha8Rng, kind: Activation) -> Result<f64> {
    // keep inputs off the ReLU kink so central differences are exact there
    let x = random_tensor(rng, [2, 2, 3, 3]).map(|v| if v.abs() < 0.01 { v + 0.05 } else { v });
    let g = random_tensor(rng, x.dims());
    let dx = activation_backward(&x, &g, kind)?;
    let num = numeric_grad(x.data(), |v| activation_apply(&with_data(&x, v), kind).dot(&g).expect("same dims"));
    Ok(relative_error(dx.data(), &num))
}

fn pool_case(rng: &mut ChaCha8Rng, kind: PoolKind, case: usize) -> Result<f64> {
    let (size, stride) = [(2, 2), (3, 1), (2, 1)][case % 3];
    // distinct values far apart relative to the step, so argmax never flips
    let dims = [2, 2, 4, 4];
    let mut order: Vec<usize> = (0..64).collect();
    for i in (1..64).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    let x = Tensor4::from_vec(dims, order.iter().map(|&v| v as f64 * 0.01).collect())?;
    let pooled = pool_forward(&x, kind, size, stride)?;
    let g = random_tensor(rng, pooled.output.dims());
    let dx = pool_backward(dims, &g, kind, size, stride, &pooled.routing)?;
    let num = numeric_grad(x.data(), |v| {
        pool_forward(&with_data(&x, v), kind, size, stride).and_then(|p| p.output.dot(&g)).expect("valid shapes")
    });
    Ok(relative_error(dx.data(), &num))
}

/// Same layer pattern as the default autoencoder on 4×4 inputs.
pub fn tiny_autoencoder(setup: Setup) -> NetworkSpec {
    let act = LayerSpec::Activation(setup.activation());
    let pool = LayerSpec::Pool {
        kind: setup.pool_kind(),
        size: 2,
        stride: 2,
    };
    NetworkSpec {
        input_shape: [1, 4, 4],
        layers: vec![
            LayerSpec::Conv(ConvSpec::new(1, 2, 3, 1, 1)),
            act,
            pool,
            LayerSpec::Conv(ConvSpec::new(2, 3, 3, 1, 1)),
            act,
            pool,
            LayerSpec::TransposeConv(ConvSpec::new(3, 3, 3, 2, 1).with_output_padding(1)),
            act,
            LayerSpec::TransposeConv(ConvSpec::new(3, 2, 3, 2, 1).with_output_padding(1)),
            act,
            LayerSpec::TransposeConv(ConvSpec::new(2, 1, 3, 1, 1)),
            LayerSpec::Activation(Activation::Identity),
        ],
        setup,
    }
}

fn flat_params(net: &Network) -> Vec<f64> {
    net.params().iter().flatten().flat_map(|p| p.kernel.data().iter().chain(&p.bias).copied()).collect()
}

fn with_flat_params(net: &Network, flat: &[f64]) -> Network {
    let mut params = net.params().to_vec();
    let mut offset = 0;
    for p in params.iter_mut().flatten() {
        let n = p.kernel.len();
        p.kernel = with_data(&p.kernel, &flat[offset..offset + n]);
        offset += n;
        let nb = p.bias.len();
        p.bias.copy_from_slice(&flat[offset..offset + nb]);
        offset += nb;
    }
    Network::new(net.spec().clone(), params).expect("same spec")
}

fn network_case(rng: &mut ChaCha8Rng, setup: Setup) -> Result<f64> {
    let net = Network::init(tiny_autoencoder(setup), rng.gen())?;
    // nonzero biases exercise the bias paths
    let mut flat = flat_params(&net);
    let mut offset = 0;
    for p in net.params().iter().flatten() {
        offset += p.kernel.len();
        for b in &mut flat[offset..offset + p.bias.len()] {
            *b = rng.gen_range(-0.2..0.2);
        }
        offset += p.bias.len();
    }
    let net = with_flat_params(&net, &flat);
    let x = random_tensor(rng, [2, 1, 4, 4]).map(|v| 0.5 + 0.5 * v);
    let (_, grads) = net.loss_and_grads(&x, &x)?;
    let analytic: Vec<f64> = grads.iter().flatten().flat_map(|p| p.kernel.data().iter().chain(&p.bias).copied()).collect();
    let num = numeric_grad(&flat, |v| {
        let out = with_flat_params(&net, v).forward(&x).expect("valid input");
        mse(out.data(), x.data())
    });
    let trace = net.forward_trace(&x)?;
    let g = random_tensor(rng, trace.output().dims());
    let (_, dx) = net.backward(&trace, &g)?;
    let num_dx = numeric_grad(x.data(), |v| net.forward(&with_data(&x, v)).and_then(|y| y.dot(&g)).expect("valid input"));
    Ok(relative_error(&analytic, &num).max(relative_error(dx.data(), &num_dx)))
}

/// Runs `cases` random checks for every layer kind and both tiny networks.
pub fn gradient_suite(cases: usize, seed: u64) -> Result<Vec<GradReport>> {
    type Case<'a> = Box<dyn Fn(&mut ChaCha8Rng, usize) -> Result<f64> + 'a>;
    let kinds: Vec<(&str, Case)> = vec![
        ("conv2d", Box::new(|r, _| conv_case(r))),
        ("transpose_conv2d", Box::new(|r, _| tconv_case(r))),
        ("relu", Box::new(|r, _| activation_case(r, Activation::Relu))),
        ("softplus", Box::new(|r, _| activation_case(r, Activation::Softplus))),
        ("identity", Box::new(|r, _| activation_case(r, Activation::Identity))),
        ("max_pool", Box::new(|r, c| pool_case(r, PoolKind::Max, c))),
        ("average_pool", Box::new(|r, c| pool_case(r, PoolKind::Average, c))),
        ("network relu_maxpool", Box::new(|r, _| network_case(r, Setup::ReluMaxPool))),
        ("network softplus_avepool", Box::new(|r, _| network_case(r, Setup::SoftplusAvePool))),
    ];
    kinds
        .into_iter()
        .enumerate()
        .map(|(k, (kind, f))| {
            let mut max_error = 0.0f64;
            for case in 0..cases {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(seed, (k * 10_000 + case) as u64));
                max_error = max_error.max(f(&mut rng, case)?);
            }
            Ok(GradReport {
                kind: kind.to_string(),
                cases,
                max_error,
            })
        })
        .collect()
}
