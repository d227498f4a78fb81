//! Binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! "NSMN" | version u16 | setup u8 | seed u64 | epoch u32 | val_loss f64
//! input c,h,w u32×3 | layer count u32 | layer descriptors
//! per parametric layer: kernel f64s, bias f64s
//! ```
//!
//! A layer descriptor is a tag byte (0 conv, 1 transpose conv, 2 activation,
//! 3 pool) followed by `in,out,k,s,p,output_padding` as u32 for the conv
//! kinds, a kind byte for activations, or kind byte + size u32 + stride u32
//! for pooling.

use std::path::Path;

use super::layers::{Activation, ConvSpec, LayerSpec, PoolKind};
use super::network::{LayerParams, Network, NetworkSpec, Setup};
use crate::error::{Error, Result};
use crate::tensor::Tensor4;

pub const MAGIC: &[u8; 4] = b"NSMN";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub seed: u64,
    /// 1-based epoch the parameters were taken from.
    pub epoch: u32,
    pub val_loss: f64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let spec = self.network.spec();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match spec.setup {
            Setup::ReluMaxPool => 0,
            Setup::SoftplusAvePool => 1,
        });
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.val_loss.to_le_bytes());
        for d in spec.input_shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(spec.layers.len() as u32).to_le_bytes());
        for layer in &spec.layers {
            match layer {
                LayerSpec::Conv(c) | LayerSpec::TransposeConv(c) => {
                    out.push(if matches!(layer, LayerSpec::Conv(_)) { 0 } else { 1 });
                    for v in [c.in_channels, c.out_channels, c.kernel_size, c.stride, c.padding, c.output_padding] {
                        out.extend_from_slice(&(v as u32).to_le_bytes());
                    }
                }
                LayerSpec::Activation(a) => {
                    out.push(2);
                    out.push(match a {
                        Activation::Relu => 0,
                        Activation::Softplus => 1,
                        Activation::Identity => 2,
                    });
                }
                LayerSpec::Pool { kind, size, stride } => {
                    out.push(3);
                    out.push(match kind {
                        PoolKind::Max => 0,
                        PoolKind::Average => 1,
                    });
                    out.extend_from_slice(&(*size as u32).to_le_bytes());
                    out.extend_from_slice(&(*stride as u32).to_le_bytes());
                }
            }
        }
        for p in self.network.params().iter().flatten() {
            for v in p.kernel.data().iter().chain(&p.bias) {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.error(0, "bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(r.error(4, &format!("unsupported version {version}")));
        }
        let setup_pos = r.pos;
        let setup = match r.u8()? {
            0 => Setup::ReluMaxPool,
            1 => Setup::SoftplusAvePool,
            other => return Err(r.error(setup_pos, &format!("unknown setup {other}"))),
        };
        let seed = r.u64()?;
        let epoch = r.u32()?;
        let val_loss = r.f64()?;
        let input_shape = [r.u32()? as usize, r.u32()? as usize, r.u32()? as usize];
        let n_layers = r.u32()? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(1024));
        for _ in 0..n_layers {
            let tag_pos = r.pos;
            let layer = match r.u8()? {
                tag @ (0 | 1) => {
                    let mut v = [0usize; 6];
                    for slot in &mut v {
                        *slot = r.u32()? as usize;
                    }
                    let spec = ConvSpec::new(v[0], v[1], v[2], v[3], v[4]).with_output_padding(v[5]);
                    if tag == 0 {
                        LayerSpec::Conv(spec)
                    } else {
                        LayerSpec::TransposeConv(spec)
                    }
                }
                2 => {
                    let kind_pos = r.pos;
                    LayerSpec::Activation(match r.u8()? {
                        0 => Activation::Relu,
                        1 => Activation::Softplus,
                        2 => Activation::Identity,
                        other => return Err(r.error(kind_pos, &format!("unknown activation {other}"))),
                    })
                }
                3 => {
                    let kind_pos = r.pos;
                    let kind = match r.u8()? {
                        0 => PoolKind::Max,
                        1 => PoolKind::Average,
                        other => return Err(r.error(kind_pos, &format!("unknown pool kind {other}"))),
                    };
                    let size = r.u32()? as usize;
                    let stride = r.u32()? as usize;
                    LayerSpec::Pool { kind, size, stride }
                }
                other => return Err(r.error(tag_pos, &format!("unknown layer tag {other}"))),
            };
            layers.push(layer);
        }
        let spec = NetworkSpec {
            input_shape,
            layers,
            setup,
        };
        let mut params = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            params.push(match layer.kernel_dims() {
                Some(dims) => {
                    let kernel = r.f64s(dims.iter().product())?;
                    let bias = r.f64s(layer.out_channels().expect("parametric"))?;
                    Some(LayerParams {
                        kernel: Tensor4::from_vec(dims, kernel)?,
                        bias,
                    })
                }
                None => None,
            });
        }
        if r.pos != bytes.len() {
            return Err(r.error(r.pos, "trailing bytes"));
        }
        let network = Network::new(spec, params)?;
        Ok(Checkpoint {
            network,
            seed,
            epoch,
            val_loss,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::Format { offset, msg, .. } => Error::Format {
                what: path.display().to_string(),
                offset,
                msg,
            },
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error(&self, offset: usize, msg: &str) -> Error {
        Error::Format {
            what: "checkpoint".into(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(self.pos, "truncated"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.error(self.pos, "length overflow"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
