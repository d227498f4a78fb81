//! Layer kernels: convolution, transpose convolution, activations and pooling.
//!
//! Convolution and transpose convolution share three loops over a "small"
//! side (conv output / transpose-conv input) and a "large" side (conv input /
//! transpose-conv output) joined by a kernel laid out as
//! `(small_channels, large_channels, k, k)`:
//!
//! * `gather`: small[a, o] = Σ K[a, b, i, j] · large[b, o·s − p + (i, j)]
//! * `scatter`: the exact adjoint of `gather`
//! * `kernel_grad`: dK[a, b, i, j] = Σ small[a, o] · large[b, o·s − p + (i, j)]
//!
//! Conv forward is a gather, its input gradient a scatter. Transpose conv is
//! the other way round, with the same kernel tensor.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Softplus,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolKind {
    Max,
    Average,
}

/// Geometry of a convolution or transpose convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_size: usize,
    pub stride: usize,
    pub padding: usize,
    /// Only meaningful for transpose convolution.
    pub output_padding: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize, kernel_size: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels,
            out_channels,
            kernel_size,
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.kernel_size == 0 || self.stride == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::InvalidSpec(format!("degenerate conv geometry {self:?}")));
        }
        if self.output_padding >= self.stride && self.output_padding > 0 {
            return Err(Error::InvalidSpec(format!(
                "output padding {} must be smaller than stride {}",
                self.output_padding, self.stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv(ConvSpec),
    TransposeConv(ConvSpec),
    Activation(Activation),
    Pool { kind: PoolKind, size: usize, stride: usize },
}

impl LayerSpec {
    pub fn is_parametric(&self) -> bool {
        matches!(self, LayerSpec::Conv(_) | LayerSpec::TransposeConv(_))
    }

    /// Kernel tensor dims for parametric layers.
    pub fn kernel_dims(&self) -> Option<[usize; 4]> {
        match self {
            LayerSpec::Conv(c) => Some([c.out_channels, c.in_channels, c.kernel_size, c.kernel_size]),
            LayerSpec::TransposeConv(c) => Some([c.in_channels, c.out_channels, c.kernel_size, c.kernel_size]),
            _ => None,
        }
    }

    pub fn out_channels(&self) -> Option<usize> {
        match self {
            LayerSpec::Conv(c) | LayerSpec::TransposeConv(c) => Some(c.out_channels),
            _ => None,
        }
    }

    /// Output (channels, height, width) for a given input shape.
    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let [c, h, w] = input;
        match *self {
            LayerSpec::Conv(spec) => {
                spec.validate()?;
                if c != spec.in_channels {
                    return Err(Error::shape("conv2d channels", c, spec.in_channels));
                }
                let oh = conv_out_dim(h, spec.kernel_size, spec.stride, spec.padding)
                    .ok_or_else(|| Error::InvalidSpec(format!("conv window larger than padded input {h}")))?;
                let ow = conv_out_dim(w, spec.kernel_size, spec.stride, spec.padding)
                    .ok_or_else(|| Error::InvalidSpec(format!("conv window larger than padded input {w}")))?;
                Ok([spec.out_channels, oh, ow])
            }
            LayerSpec::TransposeConv(spec) => {
                spec.validate()?;
                if c != spec.in_channels {
                    return Err(Error::shape("transpose_conv2d channels", c, spec.in_channels));
                }
                let oh = transpose_conv_out_dim(h, spec.kernel_size, spec.stride, spec.padding, spec.output_padding)
                    .ok_or_else(|| Error::InvalidSpec(format!("transpose conv output empty for input {h}")))?;
                let ow = transpose_conv_out_dim(w, spec.kernel_size, spec.stride, spec.padding, spec.output_padding)
                    .ok_or_else(|| Error::InvalidSpec(format!("transpose conv output empty for input {w}")))?;
                Ok([spec.out_channels, oh, ow])
            }
            LayerSpec::Activation(_) => Ok(input),
            LayerSpec::Pool { size, stride, .. } => {
                let oh = pool_out_dim(h, size, stride)?;
                let ow = pool_out_dim(w, size, stride)?;
                Ok([c, oh, ow])
            }
        }
    }
}

/// `floor((m + 2p - k) / s) + 1`, or `None` when the window does not fit.
pub fn conv_out_dim(m: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    let padded = m + 2 * p;
    if padded < k || s == 0 {
        None
    } else {
        Some((padded - k) / s + 1)
    }
}

/// `(m - 1)·s - 2p + k + output_padding`, or `None` when that is not positive.
pub fn transpose_conv_out_dim(m: usize, k: usize, s: usize, p: usize, output_padding: usize) -> Option<usize> {
    if m == 0 {
        return None;
    }
    let full = (m - 1) * s + k + output_padding;
    if full <= 2 * p {
        None
    } else {
        Some(full - 2 * p)
    }
}

fn pool_out_dim(m: usize, k: usize, s: usize) -> Result<usize> {
    if k == 0 || s == 0 {
        return Err(Error::InvalidSpec("pool window and stride must be positive".into()));
    }
    if m < k {
        return Err(Error::shape("pool window exceeds image", k, m));
    }
    if (m - k) % s != 0 {
        return Err(Error::shape("pool windows do not tile the image", (k, s), m));
    }
    Ok((m - k) / s + 1)
}

/// Small-side indices `o` whose tap `o·s + off - p` lands inside `0..large`.
fn valid_range(off: usize, s: usize, p: usize, large: usize, small: usize) -> Range<usize> {
    let lo = if p > off { (p - off).div_ceil(s) } else { 0 };
    if large + p <= off {
        return 0..0;
    }
    let hi = ((large - 1 + p - off) / s + 1).min(small);
    lo.min(hi)..hi
}

#[derive(Clone, Copy)]
struct Geometry {
    small_c: usize,
    small_h: usize,
    small_w: usize,
    large_c: usize,
    large_h: usize,
    large_w: usize,
    k: usize,
    s: usize,
    p: usize,
}

impl Geometry {
    fn small_len(&self) -> usize {
        self.small_h * self.small_w
    }

    fn patch_rows(&self) -> usize {
        self.large_c * self.k * self.k
    }
}

/// `c = a·b + beta·c` for row/column-strided views; `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || (m - 1) * rsa + (k - 1) * csa < a.len());
    assert!(k == 0 || (k - 1) * rsb + (n - 1) * csb < b.len());
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices,
    // and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Unfolds the large side into a `(large_c·k·k) × (small_h·small_w)` matrix
/// of receptive-field taps (zero where the tap falls in the padding).
fn im2col(g: Geometry, large: &[f64], col: &mut [f64]) {
    let (k, s, p) = (g.k, g.s, g.p);
    let n = g.small_len();
    col.fill(0.0);
    for b in 0..g.large_c {
        let plane = &large[b * g.large_h * g.large_w..(b + 1) * g.large_h * g.large_w];
        for ky in 0..k {
            let rows = valid_range(ky, s, p, g.large_h, g.small_h);
            for kx in 0..k {
                let cols = valid_range(kx, s, p, g.large_w, g.small_w);
                if cols.is_empty() {
                    continue;
                }
                let r = (b * k + ky) * k + kx;
                let dst_row = &mut col[r * n..(r + 1) * n];
                let first = cols.start * s + kx - p;
                for oy in rows.clone() {
                    let iy = oy * s + ky - p;
                    let lrow = &plane[iy * g.large_w..(iy + 1) * g.large_w];
                    let dst = &mut dst_row[oy * g.small_w + cols.start..oy * g.small_w + cols.end];
                    for (d, l) in dst.iter_mut().zip(lrow[first..].iter().step_by(s)) {
                        *d = *l;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates taps back onto the large side.
fn col2im(g: Geometry, col: &[f64], large: &mut [f64]) {
    let (k, s, p) = (g.k, g.s, g.p);
    let n = g.small_len();
    for b in 0..g.large_c {
        let plane = &mut large[b * g.large_h * g.large_w..(b + 1) * g.large_h * g.large_w];
        for ky in 0..k {
            let rows = valid_range(ky, s, p, g.large_h, g.small_h);
            for kx in 0..k {
                let cols = valid_range(kx, s, p, g.large_w, g.small_w);
                if cols.is_empty() {
                    continue;
                }
                let r = (b * k + ky) * k + kx;
                let src_row = &col[r * n..(r + 1) * n];
                let first = cols.start * s + kx - p;
                for oy in rows.clone() {
                    let iy = oy * s + ky - p;
                    let lrow = &mut plane[iy * g.large_w..(iy + 1) * g.large_w];
                    let src = &src_row[oy * g.small_w + cols.start..oy * g.small_w + cols.end];
                    for (l, v) in lrow[first..].iter_mut().step_by(s).zip(src) {
                        *l += v;
                    }
                }
            }
        }
    }
}

/// small = K · im2col(large)
fn gather(g: Geometry, kernel: &[f64], large: &[f64], small: &mut [f64], col: &mut Vec<f64>) {
    col.resize(g.patch_rows() * g.small_len(), 0.0);
    im2col(g, large, col);
    let kk = g.patch_rows();
    gemm(g.small_c, kk, g.small_len(), kernel, kk, 1, col, g.small_len(), 1, 1.0, small);
}

/// large += col2im(Kᵀ · small)
fn scatter(g: Geometry, kernel: &[f64], small: &[f64], large: &mut [f64], col: &mut Vec<f64>) {
    let kk = g.patch_rows();
    col.resize(kk * g.small_len(), 0.0);
    gemm(kk, g.small_c, g.small_len(), kernel, 1, kk, small, g.small_len(), 1, 0.0, col);
    col2im(g, col, large);
}

/// dK += small · im2col(large)ᵀ
fn kernel_grad(g: Geometry, small: &[f64], large: &[f64], dkernel: &mut [f64], col: &mut Vec<f64>) {
    let kk = g.patch_rows();
    col.resize(kk * g.small_len(), 0.0);
    im2col(g, large, col);
    gemm(g.small_c, g.small_len(), kk, small, g.small_len(), 1, col, 1, g.small_len(), 1.0, dkernel);
}

fn add_bias(out: &mut Tensor4, bias: &[f64]) {
    let plane = out.height() * out.width();
    for n in 0..out.batch() {
        for (c, b) in bias.iter().enumerate() {
            let item = out.item_mut(n);
            for v in &mut item[c * plane..(c + 1) * plane] {
                *v += b;
            }
        }
    }
}

fn bias_grad(grad_out: &Tensor4) -> Vec<f64> {
    let plane = grad_out.height() * grad_out.width();
    let mut db = vec![0.0; grad_out.channels()];
    for n in 0..grad_out.batch() {
        let item = grad_out.item(n);
        for (c, slot) in db.iter_mut().enumerate() {
            *slot += item[c * plane..(c + 1) * plane].iter().sum::<f64>();
        }
    }
    db
}

fn check_kernel(op: &'static str, kernel: &Tensor4, bias: Option<&[f64]>, in_channels: usize, small_is_out: bool) -> Result<()> {
    let [kd0, kd1, kh, kw] = kernel.dims();
    if kh != kw || kh == 0 {
        return Err(Error::shape(op, "square kernel", kernel.dims()));
    }
    let (kin, kout) = if small_is_out { (kd1, kd0) } else { (kd0, kd1) };
    if kin != in_channels {
        return Err(Error::shape(op, kernel.dims(), in_channels));
    }
    if let Some(b) = bias {
        if b.len() != kout {
            return Err(Error::shape(op, kernel.dims(), format!("bias of length {}", b.len())));
        }
    }
    Ok(())
}

/// Cross-correlation with zero padding; kernel dims `(C_out, C_in, k, k)`.
pub fn conv2d_forward(input: &Tensor4, kernel: &Tensor4, bias: &[f64], stride: usize, padding: usize) -> Result<Tensor4> {
    check_kernel("conv2d_forward", kernel, Some(bias), input.channels(), true)?;
    input.ensure_finite("conv2d_forward input")?;
    let [c_out, c_in, k, _] = kernel.dims();
    let [n, _, h, w] = input.dims();
    let spec = LayerSpec::Conv(ConvSpec::new(c_in, c_out, k, stride, padding));
    let [_, oh, ow] = spec.output_shape([c_in, h, w])?;
    let geom = Geometry {
        small_c: c_out,
        small_h: oh,
        small_w: ow,
        large_c: c_in,
        large_h: h,
        large_w: w,
        k,
        s: stride,
        p: padding,
    };
    let mut out = Tensor4::zeros([n, c_out, oh, ow]);
    let mut col = Vec::new();
    for i in 0..n {
        gather(geom, kernel.data(), input.item(i), out.item_mut(i), &mut col);
    }
    add_bias(&mut out, bias);
    Ok(out)
}

/// Gradients of a conv layer: (input, kernel, bias).
pub fn conv2d_backward(
    input: &Tensor4,
    kernel: &Tensor4,
    grad_out: &Tensor4,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4, Tensor4, Vec<f64>)> {
    check_kernel("conv2d_backward", kernel, None, input.channels(), true)?;
    let [c_out, c_in, k, _] = kernel.dims();
    let [n, _, h, w] = input.dims();
    let [gn, gc, oh, ow] = grad_out.dims();
    let spec = LayerSpec::Conv(ConvSpec::new(c_in, c_out, k, stride, padding));
    if [gc, oh, ow] != spec.output_shape([c_in, h, w])? || gn != n {
        return Err(Error::shape("conv2d_backward grad", grad_out.dims(), input.dims()));
    }
    let geom = Geometry {
        small_c: c_out,
        small_h: oh,
        small_w: ow,
        large_c: c_in,
        large_h: h,
        large_w: w,
        k,
        s: stride,
        p: padding,
    };
    let mut dx = Tensor4::zeros(input.dims());
    let mut dk = Tensor4::zeros(kernel.dims());
    let mut col = Vec::new();
    for i in 0..n {
        scatter(geom, kernel.data(), grad_out.item(i), dx.item_mut(i), &mut col);
        kernel_grad(geom, grad_out.item(i), input.item(i), dk.data_mut(), &mut col);
    }
    Ok((dx, dk, bias_grad(grad_out)))
}

/// Transpose convolution; kernel dims `(C_in, C_out, k, k)`. The output is
/// the adjoint of [`conv2d_forward`] with the same kernel, plus bias.
pub fn transpose_conv2d_forward(
    input: &Tensor4,
    kernel: &Tensor4,
    bias: &[f64],
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<Tensor4> {
    check_kernel("transpose_conv2d_forward", kernel, Some(bias), input.channels(), false)?;
    input.ensure_finite("transpose_conv2d_forward input")?;
    let [c_in, c_out, k, _] = kernel.dims();
    let [n, _, h, w] = input.dims();
    let spec = LayerSpec::TransposeConv(ConvSpec::new(c_in, c_out, k, stride, padding).with_output_padding(output_padding));
    let [_, oh, ow] = spec.output_shape([c_in, h, w])?;
    let geom = Geometry {
        small_c: c_in,
        small_h: h,
        small_w: w,
        large_c: c_out,
        large_h: oh,
        large_w: ow,
        k,
        s: stride,
        p: padding,
    };
    let mut out = Tensor4::zeros([n, c_out, oh, ow]);
    let mut col = Vec::new();
    for i in 0..n {
        scatter(geom, kernel.data(), input.item(i), out.item_mut(i), &mut col);
    }
    add_bias(&mut out, bias);
    Ok(out)
}

/// Gradients of a transpose-conv layer: (input, kernel, bias).
pub fn transpose_conv2d_backward(
    input: &Tensor4,
    kernel: &Tensor4,
    grad_out: &Tensor4,
    stride: usize,
    padding: usize,
) -> Result<(Tensor4, Tensor4, Vec<f64>)> {
    check_kernel("transpose_conv2d_backward", kernel, None, input.channels(), false)?;
    let [c_in, c_out, k, _] = kernel.dims();
    let [n, _, h, w] = input.dims();
    let [gn, gc, oh, ow] = grad_out.dims();
    if gn != n || gc != c_out {
        return Err(Error::shape("transpose_conv2d_backward grad", grad_out.dims(), input.dims()));
    }
    // Output padding is not passed in; any size it could have produced is accepted.
    let fits = |out: usize, m: usize| {
        transpose_conv_out_dim(m, k, stride, padding, 0).is_some_and(|base| out >= base && out < base + stride)
    };
    if !fits(oh, h) || !fits(ow, w) {
        return Err(Error::shape("transpose_conv2d_backward grad", grad_out.dims(), input.dims()));
    }
    let geom = Geometry {
        small_c: c_in,
        small_h: h,
        small_w: w,
        large_c: c_out,
        large_h: oh,
        large_w: ow,
        k,
        s: stride,
        p: padding,
    };
    let mut dx = Tensor4::zeros(input.dims());
    let mut dk = Tensor4::zeros(kernel.dims());
    let mut col = Vec::new();
    for i in 0..n {
        gather(geom, kernel.data(), grad_out.item(i), dx.item_mut(i), &mut col);
        kernel_grad(geom, input.item(i), grad_out.item(i), dk.data_mut(), &mut col);
    }
    Ok((dx, dk, bias_grad(grad_out)))
}

/// `ln(1 + e^x)` without overflow for large `|x|`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus => softplus(x),
            Activation::Identity => x,
        }
    }

    /// Derivative at `x`; the ReLU subgradient at exactly 0 is 0.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus => sigmoid(x),
            Activation::Identity => 1.0,
        }
    }
}

pub fn activation_apply(x: &Tensor4, kind: Activation) -> Tensor4 {
    x.map(|v| kind.apply(v))
}

pub fn activation_backward(x: &Tensor4, grad_out: &Tensor4, kind: Activation) -> Result<Tensor4> {
    if x.dims() != grad_out.dims() {
        return Err(Error::shape("activation_backward", x.dims(), grad_out.dims()));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * kind.derivative(v))
        .collect();
    Tensor4::from_vec(x.dims(), data)
}

/// Pooled output plus, for max pooling, the flat input index chosen for each
/// output element (first maximum in row-major window order). Empty for
/// average pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor4,
    pub routing: Vec<usize>,
}

pub fn pool_forward(x: &Tensor4, kind: PoolKind, size: usize, stride: usize) -> Result<Pooled> {
    let [n, c, h, w] = x.dims();
    let spec = LayerSpec::Pool { kind, size, stride };
    let [_, oh, ow] = spec.output_shape([c, h, w])?;
    let mut out = Tensor4::zeros([n, c, oh, ow]);
    let mut routing = Vec::new();
    if kind == PoolKind::Max {
        routing.reserve(out.len());
    }
    let inv_area = 1.0 / (size * size) as f64;
    let data = x.data();
    let out_data = out.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                match kind {
                    PoolKind::Max => {
                        let mut best = base + oy * stride * w + ox * stride;
                        for dy in 0..size {
                            for dx in 0..size {
                                let idx = base + (oy * stride + dy) * w + ox * stride + dx;
                                if data[idx] > data[best] {
                                    best = idx;
                                }
                            }
                        }
                        out_data[o] = data[best];
                        routing.push(best);
                    }
                    PoolKind::Average => {
                        let mut acc = 0.0;
                        for dy in 0..size {
                            let row = base + (oy * stride + dy) * w + ox * stride;
                            acc += data[row..row + size].iter().sum::<f64>();
                        }
                        out_data[o] = acc * inv_area;
                    }
                }
                o += 1;
            }
        }
    }
    Ok(Pooled { output: out, routing })
}

/// Gradient of pooling w.r.t. its input. Max pooling routes each output
/// gradient only to the recorded argmax.
pub fn pool_backward(
    input_dims: [usize; 4],
    grad_out: &Tensor4,
    kind: PoolKind,
    size: usize,
    stride: usize,
    routing: &[usize],
) -> Result<Tensor4> {
    let [n, c, h, w] = input_dims;
    let spec = LayerSpec::Pool { kind, size, stride };
    let [_, oh, ow] = spec.output_shape([c, h, w])?;
    if grad_out.dims() != [n, c, oh, ow] {
        return Err(Error::shape("pool_backward", grad_out.dims(), [n, c, oh, ow]));
    }
    let mut dx = Tensor4::zeros(input_dims);
    match kind {
        PoolKind::Max => {
            if routing.len() != grad_out.len() {
                return Err(Error::shape("pool_backward routing", routing.len(), grad_out.len()));
            }
            let d = dx.data_mut();
            for (&idx, &g) in routing.iter().zip(grad_out.data()) {
                d[idx] += g;
            }
        }
        PoolKind::Average => {
            let inv_area = 1.0 / (size * size) as f64;
            let g = grad_out.data();
            let d = dx.data_mut();
            let mut o = 0;
            for plane in 0..n * c {
                let base = plane * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let share = g[o] * inv_area;
                        for dy in 0..size {
                            let row = base + (oy * stride + dy) * w + ox * stride;
                            for v in &mut d[row..row + size] {
                                *v += share;
                            }
                        }
                        o += 1;
                    }
                }
            }
        }
    }
    Ok(dx)
}
