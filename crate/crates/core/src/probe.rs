//! Records per-node activation time series while a network processes a
//! video frame by frame.
//!
//! Boundary `b` is the input of layer `b`; boundary `layers.len()` is the
//! network output. So the output of layer `i` is boundary `i + 1`.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, NetworkSpec};
use crate::nonsmooth::smp;
use crate::synth::store::parse_manifest;
use crate::synth::VideoSequence;
use crate::tensor::Tensor4;

pub fn input_of(layer: usize) -> usize {
    layer
}

pub fn output_of(layer: usize) -> usize {
    layer + 1
}

/// Short description of a boundary: `input` or the kind of layer producing it.
pub fn boundary_label(spec: &NetworkSpec, boundary: usize) -> String {
    if boundary == 0 {
        return "input".into();
    }
    let kind = match spec.layers[boundary - 1] {
        LayerSpec::Conv(_) => "conv",
        LayerSpec::TransposeConv(_) => "tconv",
        LayerSpec::Activation(a) => match a {
            crate::nn::Activation::Relu => "relu",
            crate::nn::Activation::Softplus => "softplus",
            crate::nn::Activation::Identity => "identity",
        },
        LayerSpec::Pool { kind, .. } => match kind {
            crate::nn::PoolKind::Max => "maxpool",
            crate::nn::PoolKind::Average => "avgpool",
        },
    };
    format!("{kind}{}", boundary - 1)
}

/// Position of a node inside a boundary tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeCoord {
    pub channel: usize,
    pub row: usize,
    pub col: usize,
}

/// One node's activation over time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeTrace<'a> {
    pub boundary: usize,
    pub coord: NodeCoord,
    pub series: &'a [f64],
}

/// All node series at one boundary, stored node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTraces {
    pub boundary: usize,
    pub label: String,
    /// `(channels, height, width)`.
    pub shape: [usize; 3],
    pub frames: usize,
    data: Vec<f64>,
}

impl BoundaryTraces {
    fn from_frame_major(boundary: usize, label: String, shape: [usize; 3], frame_major: &[f64]) -> Self {
        let nodes: usize = shape.iter().product();
        let frames = frame_major.len() / nodes;
        let mut data = vec![0.0; frame_major.len()];
        for t in 0..frames {
            for n in 0..nodes {
                data[n * frames + t] = frame_major[t * nodes + n];
            }
        }
        BoundaryTraces {
            boundary,
            label,
            shape,
            frames,
            data,
        }
    }

    pub fn node_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn node_index(&self, coord: NodeCoord) -> usize {
        (coord.channel * self.shape[1] + coord.row) * self.shape[2] + coord.col
    }

    pub fn coord(&self, index: usize) -> NodeCoord {
        let plane = self.shape[1] * self.shape[2];
        NodeCoord {
            channel: index / plane,
            row: (index % plane) / self.shape[2],
            col: index % self.shape[2],
        }
    }

    pub fn series(&self, node: usize) -> &[f64] {
        &self.data[node * self.frames..(node + 1) * self.frames]
    }

    pub fn series_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.frames..(node + 1) * self.frames]
    }

    pub fn traces(&self) -> impl Iterator<Item = NodeTrace<'_>> {
        (0..self.node_count()).map(|n| NodeTrace {
            boundary: self.boundary,
            coord: self.coord(n),
            series: self.series(n),
        })
    }

    /// The boundary's activations at frame `t`, laid out `(c, h, w)`.
    pub fn frame(&self, t: usize) -> Vec<f64> {
        (0..self.node_count()).map(|n| self.data[n * self.frames + t]).collect()
    }

    pub fn smp_map(&self) -> Result<SmpMap> {
        let values = (0..self.node_count()).map(|n| smp(self.series(n))).collect::<Result<Vec<_>>>()?;
        Ok(SmpMap {
            boundary: self.boundary,
            shape: self.shape,
            values,
        })
    }
}

/// Traces for a selection of boundaries of one network over one video.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LayerTraceSet {
    pub boundaries: BTreeMap<usize, BoundaryTraces>,
}

impl LayerTraceSet {
    pub fn get(&self, boundary: usize) -> Result<&BoundaryTraces> {
        self.boundaries.get(&boundary).ok_or(Error::UnknownBoundary(boundary))
    }
}

/// SMP of every node at one boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct SmpMap {
    pub boundary: usize,
    pub shape: [usize; 3],
    pub values: Vec<f64>,
}

impl SmpMap {
    pub fn zeros(boundary: usize, shape: [usize; 3]) -> Self {
        SmpMap {
            boundary,
            shape,
            values: vec![0.0; shape.iter().product()],
        }
    }

    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.values[(channel * self.shape[1] + row) * self.shape[2] + col]
    }

    pub fn plane(&self) -> usize {
        self.shape[1] * self.shape[2]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn as_tensor(&self) -> Tensor4 {
        let [c, h, w] = self.shape;
        Tensor4::from_vec([1, c, h, w], self.values.clone()).expect("consistent shape")
    }
}

/// Mean SMP across channels at each `(row, col)`, as a one-channel map.
pub fn channel_mean_smp(map: &SmpMap) -> Result<SmpMap> {
    let [c, h, w] = map.shape;
    if c == 0 {
        return Err(Error::Empty("channel_mean_smp"));
    }
    let plane = h * w;
    let mut values = vec![0.0; plane];
    for ch in 0..c {
        for (acc, v) in values.iter_mut().zip(&map.values[ch * plane..(ch + 1) * plane]) {
            *acc += v;
        }
    }
    values.iter_mut().for_each(|v| *v /= c as f64);
    Ok(SmpMap {
        boundary: map.boundary,
        shape: [1, h, w],
        values,
    })
}

/// SMP maps for every traced boundary.
pub fn layer_smp_map(traces: &LayerTraceSet) -> Result<BTreeMap<usize, SmpMap>> {
    traces.boundaries.iter().map(|(b, t)| Ok((*b, t.smp_map()?))).collect()
}

fn check_selection(net: &Network, video: &VideoSequence, boundaries: &[usize]) -> Result<Vec<[usize; 3]>> {
    let shapes = net.spec().boundary_shapes()?;
    let [c, h, w] = net.spec().input_shape;
    if c != 1 || (h, w) != (video.height, video.width) {
        return Err(Error::shape("trace_forward video", (video.height, video.width), net.spec().input_shape));
    }
    if let Some(&bad) = boundaries.iter().find(|&&b| b >= shapes.len()) {
        return Err(Error::UnknownBoundary(bad));
    }
    Ok(shapes)
}

/// Frames processed per batched forward pass while tracing.
const TRACE_BATCH: usize = 16;

fn for_each_chunk(
    net: &Network,
    video: &VideoSequence,
    chunk_frames: usize,
    mut f: impl FnMut(&[Tensor4]) -> Result<()>,
) -> Result<()> {
    let frames = video.frame_count();
    let plane = video.height * video.width;
    let mut start = 0;
    while start < frames {
        let end = (start + chunk_frames.max(1)).min(frames);
        let data = video.data()[start * plane..end * plane].to_vec();
        let batch = Tensor4::from_vec([end - start, 1, video.height, video.width], data)?;
        let trace = net.forward_trace(&batch)?;
        f(&trace.activations)?;
        start = end;
    }
    Ok(())
}

/// Runs every frame through `net` in order and records the activations of
/// the selected boundaries. The network is only read.
pub fn trace_forward(net: &Network, video: &VideoSequence, boundaries: &[usize]) -> Result<LayerTraceSet> {
    let shapes = check_selection(net, video, boundaries)?;
    let mut frame_major: BTreeMap<usize, Vec<f64>> = boundaries.iter().map(|&b| (b, Vec::new())).collect();
    for_each_chunk(net, video, TRACE_BATCH, |acts| {
        for (b, buf) in frame_major.iter_mut() {
            buf.extend_from_slice(acts[*b].data());
        }
        Ok(())
    })?;
    let boundaries = frame_major
        .into_iter()
        .map(|(b, buf)| (b, BoundaryTraces::from_frame_major(b, boundary_label(net.spec(), b), shapes[b], &buf)))
        .collect();
    Ok(LayerTraceSet { boundaries })
}

const TRACE_FORMAT: &str = "nslab-traces";
const TRACE_VERSION: u32 = 1;

fn boundary_file(b: usize) -> String {
    format!("boundary_{b:03}.bin")
}

/// Same as [`trace_forward`] but streams activations to `dir` in chunks of
/// `chunk_frames` frames, so memory stays bounded by the chunk size. Each
/// boundary gets a frame-major little-endian f64 block file; `manifest.txt`
/// records shapes and the frame count.
pub fn trace_to_store(net: &Network, video: &VideoSequence, boundaries: &[usize], dir: &Path, chunk_frames: usize) -> Result<()> {
    let shapes = check_selection(net, video, boundaries)?;
    fs::create_dir_all(dir)?;
    let mut writers = boundaries
        .iter()
        .map(|&b| {
            let f = OpenOptions::new().create(true).write(true).truncate(true).open(dir.join(boundary_file(b)))?;
            Ok((b, BufWriter::new(f)))
        })
        .collect::<Result<BTreeMap<usize, BufWriter<File>>>>()?;
    for_each_chunk(net, video, chunk_frames, |acts| {
        for (b, w) in writers.iter_mut() {
            for v in acts[*b].data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    })?;
    for w in writers.values_mut() {
        w.flush()?;
    }
    let mut manifest = format!(
        "format={TRACE_FORMAT}\nversion={TRACE_VERSION}\nframes={}\nboundaries={}\n",
        video.frame_count(),
        writers.keys().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
    );
    for &b in writers.keys() {
        let [c, h, w] = shapes[b];
        manifest.push_str(&format!("boundary.{b}.shape={c},{h},{w}\nboundary.{b}.label={}\n", boundary_label(net.spec(), b)));
    }
    fs::write(dir.join("manifest.txt"), manifest)?;
    Ok(())
}

/// Loads one boundary written by [`trace_to_store`].
pub fn read_stored_boundary(dir: &Path, boundary: usize) -> Result<BoundaryTraces> {
    let manifest_path = dir.join("manifest.txt");
    if !manifest_path.exists() {
        return Err(Error::MissingInput(vec![manifest_path]));
    }
    let m = parse_manifest(&fs::read_to_string(&manifest_path)?);
    let bad = |msg: &str| Error::Format {
        what: manifest_path.display().to_string(),
        offset: 0,
        msg: msg.to_string(),
    };
    if m.get("format").map(String::as_str) != Some(TRACE_FORMAT) || m.get("version").map(String::as_str) != Some("1") {
        return Err(bad("not a version 1 trace manifest"));
    }
    let frames: usize = m.get("frames").and_then(|v| v.parse().ok()).ok_or_else(|| bad("missing frames"))?;
    let shape: Vec<usize> = m
        .get(&format!("boundary.{boundary}.shape"))
        .ok_or(Error::UnknownBoundary(boundary))?
        .split(',')
        .map(|v| v.trim().parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    let shape: [usize; 3] = shape.try_into().map_err(|_| bad("shape needs three entries"))?;
    let label = m.get(&format!("boundary.{boundary}.label")).cloned().unwrap_or_default();
    let path = dir.join(boundary_file(boundary));
    let bytes = fs::read(&path)?;
    let expected = frames * shape.iter().product::<usize>() * 8;
    if bytes.len() != expected {
        return Err(Error::Format {
            what: path.display().to_string(),
            offset: bytes.len() as u64,
            msg: format!("expected {expected} bytes"),
        });
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(BoundaryTraces::from_frame_major(boundary, label, shape, &values))
}
