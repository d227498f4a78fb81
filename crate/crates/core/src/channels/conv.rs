use crate::error::{Error, Result};
use crate::nn::{conv2d_forward, transpose_conv2d_forward, ConvSpec, LayerParams, LayerSpec};
use crate::probe::{channel_mean_smp, SmpMap};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    Conv,
    TransposeConv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    /// Every weight replaced by the scalar `w0`.
    Expected(f64),
    /// Absolute kernel, laid out like the layer's kernel.
    Actual(Tensor4),
}

/// Linear SMP model of a conv or transpose-conv layer: each output SMP is
/// the |W|-weighted sum of input SMPs over its receptive field.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvChannelModel {
    pub kind: ConvKind,
    pub geometry: ConvSpec,
    pub weights: WeightMode,
}

impl ConvChannelModel {
    pub fn new(kind: ConvKind, geometry: ConvSpec, weights: WeightMode) -> Result<Self> {
        let model = ConvChannelModel { kind, geometry, weights };
        match &model.weights {
            WeightMode::Expected(w0) if !(w0.is_finite() && *w0 >= 0.0) => {
                return Err(Error::InvalidSpec(format!("w0 must be finite and non-negative, got {w0}")));
            }
            WeightMode::Actual(k) if k.dims() != model.kernel_dims() => {
                return Err(Error::shape("ConvChannelModel weights", k.dims(), model.kernel_dims()));
            }
            WeightMode::Actual(k) if k.data().iter().any(|v| !(*v >= 0.0)) => {
                return Err(Error::InvalidSpec("actual-mode weights must be non-negative".into()));
            }
            _ => {}
        }
        Ok(model)
    }

    /// Builds the model of a trained layer; `expected` selects the w0 surrogate.
    pub fn from_layer(layer: &LayerSpec, params: &LayerParams, expected: bool) -> Result<Self> {
        let (kind, geometry) = match layer {
            LayerSpec::Conv(c) => (ConvKind::Conv, *c),
            LayerSpec::TransposeConv(c) => (ConvKind::TransposeConv, *c),
            _ => return Err(Error::InvalidSpec("channel model needs a conv or transpose-conv layer".into())),
        };
        let weights = if expected {
            WeightMode::Expected(estimate_w0(&params.kernel)?)
        } else {
            WeightMode::Actual(params.kernel.map(f64::abs))
        };
        Self::new(kind, geometry, weights)
    }

    pub fn kernel_dims(&self) -> [usize; 4] {
        let g = &self.geometry;
        let k = g.kernel_size;
        match self.kind {
            ConvKind::Conv => [g.out_channels, g.in_channels, k, k],
            ConvKind::TransposeConv => [g.in_channels, g.out_channels, k, k],
        }
    }

    fn layer_spec(&self) -> LayerSpec {
        match self.kind {
            ConvKind::Conv => LayerSpec::Conv(self.geometry),
            ConvKind::TransposeConv => LayerSpec::TransposeConv(self.geometry),
        }
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        self.layer_spec().output_shape(input)
    }
}

/// Sample mean of |W| over all kernel entries.
pub fn estimate_w0(kernel: &Tensor4) -> Result<f64> {
    if kernel.is_empty() {
        return Err(Error::Empty("estimate_w0 kernel"));
    }
    Ok(kernel.data().iter().map(|w| w.abs()).sum::<f64>() / kernel.len() as f64)
}

/// Predicted output SMP map. Padding contributes SMP 0.
pub fn predict_conv_smp(input: &SmpMap, model: &ConvChannelModel) -> Result<SmpMap> {
    let g = &model.geometry;
    if input.shape[0] != g.in_channels {
        return Err(Error::shape("predict_conv_smp input", input.shape, g.in_channels));
    }
    let out_shape = model.output_shape(input.shape)?;
    let (x, kernel) = match &model.weights {
        WeightMode::Actual(k) => (input.as_tensor(), k.clone()),
        WeightMode::Expected(w0) => {
            // every input channel replaced by the channel mean
            let mean = channel_mean_smp(input)?;
            let [c, h, w] = input.shape;
            let data = mean.values.iter().copied().cycle().take(c * h * w).collect();
            (Tensor4::from_vec([1, c, h, w], data)?, Tensor4::filled(model.kernel_dims(), *w0))
        }
    };
    let zero_bias = vec![0.0; g.out_channels];
    let y = match model.kind {
        ConvKind::Conv => conv2d_forward(&x, &kernel, &zero_bias, g.stride, g.padding)?,
        ConvKind::TransposeConv => transpose_conv2d_forward(&x, &kernel, &zero_bias, g.stride, g.padding, g.output_padding)?,
    };
    debug_assert_eq!([y.channels(), y.height(), y.width()], out_shape);
    Ok(SmpMap {
        boundary: input.boundary + 1,
        shape: out_shape,
        values: y.into_data(),
    })
}
