//! `fit-channels` and `predict`: the SMP propagation analysis on the
//! relu_maxpool realizations.

use std::collections::BTreeMap;
use std::fs;

use nslab::channels::{
    estimate_w0, fit_maxpool_channel, fit_relu_channel, linreg_r2, monte_carlo_pipeline, predict_conv_smp, wasserstein1,
    ChannelParams, ConvChannelModel, LinearFit, PearsonAccumulator, PoolStage, RegressionResult,
};
use nslab::nn::{Activation, LayerSpec, Network, NetworkSpec, PoolKind, Setup};
use nslab::probe::{channel_mean_smp, layer_smp_map, trace_forward, SmpMap};
use nslab::rng::{derive_labeled, derive_seed};
use nslab::synth::store::read_video;
use nslab::{Error, Result};
use rayon::prelude::*;
use sha2::{Digest as _, Sha256};

use crate::analyze::{bin_edges, histogram};
use crate::config::ExperimentConfig;
use crate::data::video_files;
use crate::layout::Layout;
use crate::smpcache::{self, Digest};
use crate::tables::{missing, write_table, PEARSON, R2_SUMMARY, SMP_HIST, SMP_PAIRS, WASSERSTEIN};
use crate::train::load_checkpoint;

/// Layer indices the analysis needs, located in a network spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeLayers {
    /// Second conv layer.
    pub conv: usize,
    /// ReLU right after it.
    pub relu: usize,
    /// Max pool right after the ReLU.
    pub pool: usize,
    pub pool_size: usize,
    pub pool_stride: usize,
    pub tconvs: Vec<usize>,
}

impl ProbeLayers {
    pub fn locate(spec: &NetworkSpec) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidSpec(format!("channel analysis: {msg}"));
        let convs: Vec<usize> = spec.layers.iter().enumerate().filter(|(_, l)| matches!(l, LayerSpec::Conv(_))).map(|(i, _)| i).collect();
        let conv = *convs.get(1).ok_or_else(|| bad("needs a second conv layer"))?;
        if spec.layers.get(conv + 1) != Some(&LayerSpec::Activation(Activation::Relu)) {
            return Err(bad("second conv layer must feed a ReLU"));
        }
        let (pool_size, pool_stride) = match spec.layers.get(conv + 2) {
            Some(LayerSpec::Pool { kind: PoolKind::Max, size, stride }) => (*size, *stride),
            _ => return Err(bad("ReLU must feed a max pool")),
        };
        let tconvs = spec.layers.iter().enumerate().filter(|(_, l)| matches!(l, LayerSpec::TransposeConv(_))).map(|(i, _)| i).collect();
        Ok(ProbeLayers {
            conv,
            relu: conv + 1,
            pool: conv + 2,
            pool_size,
            pool_stride,
            tconvs,
        })
    }

    /// Boundaries whose SMP maps are cached.
    pub fn boundaries(&self) -> Vec<usize> {
        let mut b = vec![self.conv, self.relu, self.pool, self.pool + 1];
        for &t in &self.tconvs {
            b.extend([t, t + 1]);
        }
        b.sort_unstable();
        b.dedup();
        b
    }

    /// Report names: the probed conv layer, then tconv1, tconv2, ...
    pub fn layer_names(&self) -> Vec<(usize, String)> {
        std::iter::once((self.conv, "conv2".to_string()))
            .chain(self.tconvs.iter().enumerate().map(|(i, &t)| (t, format!("tconv{}", i + 1))))
            .collect()
    }
}

/// Published reference R² for (layer name, mode), where one exists.
pub fn reference_r2(layer: &str, mode: &str) -> Option<f64> {
    match (layer, mode) {
        ("conv2", "actual") => Some(0.944),
        ("conv2", "expected") => Some(0.842),
        ("tconv1", "actual") => Some(0.79),
        ("tconv2", "actual") => Some(0.65),
        ("tconv3", "actual") => Some(0.87),
        _ => None,
    }
}

pub const REFERENCE_PEARSON: f64 = 0.16;

struct Realization {
    r: usize,
    net: Network,
    layers: ProbeLayers,
    digest: Vec<u8>,
}

fn relu_realizations(cfg: &ExperimentConfig) -> Result<Vec<Realization>> {
    if !cfg.train.setups.contains(&Setup::ReluMaxPool) {
        return Err(Error::Config("the channel analysis needs the relu_maxpool setup".into()));
    }
    let layout = Layout::new(&cfg.out);
    let paths: Vec<_> = (0..cfg.train.realizations).map(|r| layout.checkpoint(Setup::ReluMaxPool, r)).collect();
    missing(&paths)?;
    (0..cfg.train.realizations)
        .map(|r| {
            let net = load_checkpoint(&layout, Setup::ReluMaxPool, r)?.network;
            let layers = ProbeLayers::locate(net.spec())?;
            let digest = Sha256::digest(fs::read(&paths[r])?).to_vec();
            Ok(Realization { r, net, layers, digest })
        })
        .collect()
}

fn source_digest(real: &Realization, layout: &Layout, v: usize) -> Result<Digest> {
    let mut h = Sha256::new();
    h.update(&real.digest);
    for f in video_files(&layout.video(v)) {
        h.update(fs::read(&f).map_err(|_| Error::MissingInput(vec![f.clone()]))?);
    }
    Ok(h.finalize().into())
}

fn smp_maps(real: &Realization, layout: &Layout, v: usize) -> Result<BTreeMap<usize, SmpMap>> {
    let path = layout.smp_cache(real.r, v);
    let source = source_digest(real, layout, v)?;
    if let Some(maps) = smpcache::load_if_current(&path, &source)? {
        return Ok(maps);
    }
    let video = read_video(&layout.video(v))?;
    let maps = layer_smp_map(&trace_forward(&real.net, &video, &real.layers.boundaries())?)?;
    smpcache::save(&path, &source, &maps)?;
    Ok(maps)
}

/// Computes (or reuses) SMP maps for every (realization, video) and
/// hands each to `f`; results come back in (realization, video) order.
fn per_video<T: Send>(
    cfg: &ExperimentConfig,
    reals: &[Realization],
    f: impl Fn(&Realization, usize, &BTreeMap<usize, SmpMap>) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let layout = Layout::new(&cfg.out);
    let tasks: Vec<(usize, usize)> = (0..reals.len()).flat_map(|i| (0..cfg.data.videos).map(move |v| (i, v))).collect();
    tasks
        .into_par_iter()
        .map(|(i, v)| {
            let maps = smp_maps(&reals[i], &layout, v)?;
            f(&reals[i], v, &maps)
        })
        .collect()
}

fn map_at(maps: &BTreeMap<usize, SmpMap>, b: usize) -> Result<&SmpMap> {
    maps.get(&b).ok_or(Error::UnknownBoundary(b))
}

/// Window maxima of `input` aligned with each pooled output node.
fn window_max(input: &SmpMap, out_shape: [usize; 3], size: usize, stride: usize) -> Vec<f64> {
    let [c, oh, ow] = out_shape;
    let mut out = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        for r in 0..oh {
            for col in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for i in 0..size {
                    for j in 0..size {
                        m = m.max(input.get(ch, r * stride + i, col * stride + j));
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

fn conv_model(net: &Network, layer: usize, expected: bool) -> Result<ConvChannelModel> {
    let params = net.params()[layer].as_ref().ok_or_else(|| Error::InvalidSpec(format!("layer {layer} has no parameters")))?;
    ConvChannelModel::from_layer(&net.spec().layers[layer], params, expected)
}

/// Channel-mean predicted and real SMP at the output of `layer`.
fn layer_means(net: &Network, layer: usize, expected: bool, maps: &BTreeMap<usize, SmpMap>) -> Result<(Vec<f64>, Vec<f64>)> {
    let predicted = predict_conv_smp(map_at(maps, layer)?, &conv_model(net, layer, expected)?)?;
    let real = map_at(maps, layer + 1)?;
    Ok((channel_mean_smp(&predicted)?.values, channel_mean_smp(real)?.values))
}

struct FitData {
    conv: Vec<(f64, f64)>,
    relu: Vec<(f64, f64)>,
    pool: Vec<(f64, f64)>,
    rows: Vec<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct FitSummary {
    pub realization: usize,
    pub params: ChannelParams,
    pub relu_pairs: usize,
    pub pool_pairs: usize,
}

pub fn fit_channels(cfg: &ExperimentConfig) -> Result<Vec<FitSummary>> {
    let layout = Layout::new(&cfg.out);
    let reals = relu_realizations(cfg)?;
    let data = per_video(cfg, &reals, |real, v, maps| {
        let l = &real.layers;
        let key = |pair: &str, b: usize| vec![real.r.to_string(), v.to_string(), pair.to_string(), b.to_string()];
        let mut rows = Vec::new();
        for (pair, expected) in [("conv_expected", true), ("conv_actual", false)] {
            let (pred, real_mean) = layer_means(&real.net, l.conv, expected, maps)?;
            let w = map_at(maps, l.conv + 1)?.shape[2];
            for (i, (x, y)) in pred.iter().zip(&real_mean).enumerate() {
                let mut row = key(pair, l.conv + 1);
                row.extend(["0".into(), (i / w).to_string(), (i % w).to_string(), x.to_string(), y.to_string()]);
                rows.push(row);
            }
        }
        let (relu_in, relu_out) = (map_at(maps, l.relu)?, map_at(maps, l.relu + 1)?);
        let relu: Vec<(f64, f64)> = relu_in.values.iter().copied().zip(relu_out.values.iter().copied()).collect();
        let pool_out = map_at(maps, l.pool + 1)?;
        let xs = window_max(map_at(maps, l.pool)?, pool_out.shape, l.pool_size, l.pool_stride);
        let pool: Vec<(f64, f64)> = xs.into_iter().zip(pool_out.values.iter().copied()).collect();
        for (pair, b, map, pairs) in [("relu", l.relu + 1, relu_out, &relu), ("maxpool", l.pool + 1, pool_out, &pool)] {
            let plane = map.shape[1] * map.shape[2];
            for (i, (x, y)) in pairs.iter().enumerate() {
                let mut row = key(pair, b);
                row.extend([
                    (i / plane).to_string(),
                    ((i % plane) / map.shape[2]).to_string(),
                    (i % map.shape[2]).to_string(),
                    x.to_string(),
                    y.to_string(),
                ]);
                rows.push(row);
            }
        }
        let conv_pred = predict_conv_smp(map_at(maps, l.conv)?, &conv_model(&real.net, l.conv, false)?)?.values;
        let conv: Vec<(f64, f64)> = conv_pred.into_iter().zip(map_at(maps, l.conv + 1)?.values.iter().copied()).collect();
        Ok(FitData { conv, relu, pool, rows })
    })?;

    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (real, chunk) in reals.iter().zip(data.chunks(cfg.data.videos)) {
        let relu: Vec<(f64, f64)> = chunk.iter().flat_map(|d| d.relu.iter().copied()).collect();
        let pool: Vec<(f64, f64)> = chunk.iter().flat_map(|d| d.pool.iter().copied()).collect();
        let (conv_x, conv_y): (Vec<f64>, Vec<f64>) = chunk.iter().flat_map(|d| d.conv.iter().copied()).unzip();
        let max_out = relu.iter().map(|p| p.1).fold(0.0, f64::max);
        let split = cfg.analysis.split_a.unwrap_or_else(|| {
            let mean = pool.iter().map(|p| p.0).sum::<f64>() / pool.len().max(1) as f64;
            (cfg.analysis.split_a_rel * mean).max(f64::MIN_POSITIVE)
        });
        let params = ChannelParams {
            relu: fit_relu_channel(&relu, cfg.analysis.eps_zero_rel * max_out)?,
            maxpool: fit_maxpool_channel(&pool, split)?,
            w0: Some(estimate_w0(&conv_model_kernel(&real.net, real.layers.conv)?)?),
            conv_line: Some(linreg_r2(&conv_x, &conv_y)?.line()),
        };
        let path = layout.channel_params(real.r);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        params.save(&path)?;
        summaries.push(FitSummary {
            realization: real.r,
            params,
            relu_pairs: relu.len(),
            pool_pairs: pool.len(),
        });
        rows.extend(chunk.iter().flat_map(|d| d.rows.iter().cloned()));
    }
    write_table(&layout.report(SMP_PAIRS.name), &SMP_PAIRS, &rows)?;
    Ok(summaries)
}

fn conv_model_kernel(net: &Network, layer: usize) -> Result<nslab::Tensor4> {
    Ok(net.params()[layer].as_ref().ok_or_else(|| Error::InvalidSpec(format!("layer {layer} has no parameters")))?.kernel.clone())
}

/// Pairs every |W| entry with the input SMP it multiplies, for each output node.
fn weight_smp_pearson(net: &Network, layer: usize, input: &SmpMap, acc: &mut PearsonAccumulator) -> Result<()> {
    let kernel = conv_model_kernel(net, layer)?;
    let spec = match net.spec().layers[layer] {
        LayerSpec::Conv(c) => c,
        _ => return Err(Error::InvalidSpec("weight/SMP correlation needs a conv layer".into())),
    };
    let [c_out, c_in, k, _] = kernel.dims();
    let [_, h, w] = input.shape;
    let [_, oh, ow] = net.spec().layers[layer].output_shape(input.shape)?;
    let (s, p) = (spec.stride as isize, spec.padding as isize);
    for co in 0..c_out {
        for m in 0..oh as isize {
            for n in 0..ow as isize {
                for ci in 0..c_in {
                    for i in 0..k {
                        for j in 0..k {
                            let (u, v) = (m * s - p + i as isize, n * s - p + j as isize);
                            if u < 0 || v < 0 || u >= h as isize || v >= w as isize {
                                continue;
                            }
                            acc.push(kernel.get(co, ci, i, j).abs(), input.get(ci, u as usize, v as usize));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct R2Row {
    pub layer: String,
    pub mode: &'static str,
    pub fit: RegressionResult,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct W1Row {
    /// `None` for the pooled row.
    pub realization: Option<usize>,
    pub predicted_samples: usize,
    pub real_samples: usize,
    pub w1: f64,
    pub real_mean: f64,
}

impl W1Row {
    pub fn ratio(&self) -> f64 {
        self.w1 / self.real_mean
    }
}

#[derive(Debug, Clone)]
pub struct PredictSummary {
    pub r2: Vec<R2Row>,
    pub wasserstein: Vec<W1Row>,
    /// Per realization, then pooled (`None`).
    pub pearson: Vec<(Option<usize>, u64, f64)>,
}

struct VideoPrediction {
    means: Vec<(Vec<f64>, Vec<f64>)>,
    pearson: PearsonAccumulator,
    predicted: Vec<f64>,
    real: Vec<f64>,
}

fn w1_row(realization: Option<usize>, predicted: &[f64], real: &[f64]) -> Result<W1Row> {
    Ok(W1Row {
        realization,
        predicted_samples: predicted.len(),
        real_samples: real.len(),
        w1: wasserstein1(predicted, real)?,
        real_mean: real.iter().sum::<f64>() / real.len() as f64,
    })
}

pub fn predict(cfg: &ExperimentConfig) -> Result<PredictSummary> {
    let layout = Layout::new(&cfg.out);
    let reals = relu_realizations(cfg)?;
    missing(&reals.iter().map(|r| layout.channel_params(r.r)).collect::<Vec<_>>())?;
    let params: Vec<ChannelParams> = reals.iter().map(|r| ChannelParams::load(&layout.channel_params(r.r))).collect::<Result<_>>()?;
    let modes = [("actual", false), ("expected", true)];

    let per = per_video(cfg, &reals, |real, v, maps| {
        let l = &real.layers;
        let mut means = Vec::new();
        for (layer, _) in l.layer_names() {
            for (_, expected) in modes {
                means.push(layer_means(&real.net, layer, expected, maps)?);
            }
        }
        let mut pearson = PearsonAccumulator::default();
        weight_smp_pearson(&real.net, l.conv, map_at(maps, l.conv)?, &mut pearson)?;
        let p = &params[real.r];
        let stage = PoolStage {
            size: l.pool_size,
            stride: l.pool_stride,
            params: p.maxpool,
        };
        let seed = derive_seed(derive_labeled(cfg.seed, "monte-carlo", real.r as u64), v as u64);
        let predicted = monte_carlo_pipeline(map_at(maps, l.conv)?, &conv_model(&real.net, l.conv, false)?, p.conv_line.unwrap_or(LinearFit::IDENTITY), &p.relu, &stage, cfg.analysis.mc_trials, seed)?;
        Ok(VideoPrediction {
            means,
            pearson,
            predicted,
            real: map_at(maps, l.pool + 1)?.values.clone(),
        })
    })?;

    // R² pooled over every realization, video and node
    let names = reals[0].layers.layer_names();
    let mut r2 = Vec::new();
    let mut slot = 0;
    for (_, name) in &names {
        for (mode, _) in modes {
            let pred: Vec<f64> = per.iter().flat_map(|p| p.means[slot].0.iter().copied()).collect();
            let real: Vec<f64> = per.iter().flat_map(|p| p.means[slot].1.iter().copied()).collect();
            r2.push(R2Row {
                layer: name.clone(),
                mode,
                fit: linreg_r2(&pred, &real)?,
                reference: reference_r2(name, mode),
            });
            slot += 1;
        }
    }

    let mut wasserstein = Vec::new();
    let mut pearson = Vec::new();
    let mut all_acc = PearsonAccumulator::default();
    for (real, chunk) in reals.iter().zip(per.chunks(cfg.data.videos)) {
        let pred: Vec<f64> = chunk.iter().flat_map(|p| p.predicted.iter().copied()).collect();
        let emp: Vec<f64> = chunk.iter().flat_map(|p| p.real.iter().copied()).collect();
        wasserstein.push(w1_row(Some(real.r), &pred, &emp)?);
        let mut acc = PearsonAccumulator::default();
        chunk.iter().for_each(|p| acc.merge(&p.pearson));
        pearson.push((Some(real.r), acc.n, acc.value()?));
        all_acc.merge(&acc);
    }
    let all_pred: Vec<f64> = per.iter().flat_map(|p| p.predicted.iter().copied()).collect();
    let all_real: Vec<f64> = per.iter().flat_map(|p| p.real.iter().copied()).collect();
    wasserstein.push(w1_row(None, &all_pred, &all_real)?);
    pearson.push((None, all_acc.n, all_acc.value()?));

    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let label = |r: Option<usize>| r.map_or("all".to_string(), |r| r.to_string());
    let rows: Vec<Vec<String>> = r2
        .iter()
        .map(|row| {
            vec![
                row.layer.clone(),
                row.mode.to_string(),
                row.fit.slope.to_string(),
                row.fit.intercept.to_string(),
                row.fit.r2.to_string(),
                opt(row.reference),
            ]
        })
        .collect();
    write_table(&layout.report(R2_SUMMARY.name), &R2_SUMMARY, &rows)?;
    let rows: Vec<Vec<String>> = wasserstein
        .iter()
        .map(|w| {
            vec![
                label(w.realization),
                w.predicted_samples.to_string(),
                w.real_samples.to_string(),
                w.w1.to_string(),
                w.real_mean.to_string(),
                w.ratio().to_string(),
            ]
        })
        .collect();
    write_table(&layout.report(WASSERSTEIN.name), &WASSERSTEIN, &rows)?;
    let rows: Vec<Vec<String>> = pearson
        .iter()
        .map(|(r, n, p)| vec![label(*r), n.to_string(), p.to_string(), if r.is_none() { REFERENCE_PEARSON.to_string() } else { String::new() }])
        .collect();
    write_table(&layout.report(PEARSON.name), &PEARSON, &rows)?;

    let bins = cfg.analysis.hist_bins;
    let (lo, _, width) = bin_edges(all_pred.iter().chain(&all_real).copied(), bins);
    let hi = lo + width * bins as f64;
    let hp = histogram(&all_pred, lo, hi, bins);
    let hr = histogram(&all_real, lo, hi, bins);
    let rows: Vec<Vec<String>> = (0..bins)
        .map(|b| {
            vec![
                (lo + b as f64 * width).to_string(),
                (lo + (b + 1) as f64 * width).to_string(),
                (hp[b] as f64 / all_pred.len() as f64).to_string(),
                (hr[b] as f64 / all_real.len() as f64).to_string(),
            ]
        })
        .collect();
    write_table(&layout.report(SMP_HIST.name), &SMP_HIST, &rows)?;

    Ok(PredictSummary { r2, wasserstein, pearson })
}
