//! `analyze`: AveNonSmooth of every original video and of its
//! reconstruction by every trained network.

use nslab::nn::{train::select_batch, Network, Setup};
use nslab::nonsmooth::{ave_nonsmooth, detect_nonsmooth};
use nslab::synth::VideoSequence;
use nslab::Result;
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::data::load_videos;
use crate::layout::Layout;
use crate::tables::{write_table, AVENONSMOOTH, AVENONSMOOTH_HIST, EVENTS};
use crate::train::{load_checkpoint, runs};

pub const ORIGINAL: &str = "original";

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    /// `original` or a setup tag.
    pub setup: String,
    pub realization: Option<usize>,
    pub video: usize,
    pub ave_nonsmooth: f64,
    pub events: usize,
}

const RECON_CHUNK: usize = 64;

/// Runs every frame through `net` and reassembles the output frames.
pub fn reconstruct(net: &Network, video: &VideoSequence) -> Result<VideoSequence> {
    let frames = video.to_tensor();
    let mut data = Vec::with_capacity(frames.len());
    let idx: Vec<usize> = (0..frames.batch()).collect();
    for chunk in idx.chunks(RECON_CHUNK) {
        data.extend_from_slice(net.forward(&select_batch(&frames, chunk))?.data());
    }
    VideoSequence::new(video.height, video.width, data, video.period)
}

fn score(setup: &str, realization: Option<usize>, video: usize, seq: &VideoSequence, tau_d: f64) -> Result<VideoScore> {
    let mut events = 0;
    for r in 0..seq.height {
        for c in 0..seq.width {
            events += detect_nonsmooth(&seq.pixel_series(r, c), tau_d)?.len();
        }
    }
    Ok(VideoScore {
        setup: setup.to_string(),
        realization,
        video,
        ave_nonsmooth: ave_nonsmooth(seq)?,
        events,
    })
}

/// Equal-width bins over `[lo, hi]`; the last bin is closed.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for v in values {
        let b = (((v - lo) / width).floor().max(0.0) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

pub fn bin_edges(values: impl Iterator<Item = f64>, bins: usize) -> (f64, f64, f64) {
    let hi = values.fold(0.0f64, f64::max);
    let hi = if hi > 0.0 { hi } else { 1.0 };
    (0.0, hi, hi / bins as f64)
}

pub fn analyze(cfg: &ExperimentConfig) -> Result<Vec<VideoScore>> {
    let layout = Layout::new(&cfg.out);
    let videos = load_videos(cfg)?;
    let nets = runs(cfg)
        .into_iter()
        .map(|(s, r)| Ok((s, r, load_checkpoint(&layout, s, r)?.network)))
        .collect::<Result<Vec<(Setup, usize, Network)>>>()?;
    let tau_d = cfg.analysis.tau_d;

    let mut scores = videos
        .par_iter()
        .enumerate()
        .map(|(v, seq)| score(ORIGINAL, None, v, seq, tau_d))
        .collect::<Result<Vec<_>>>()?;
    let tasks: Vec<(usize, usize)> = (0..nets.len()).flat_map(|n| (0..videos.len()).map(move |v| (n, v))).collect();
    scores.extend(
        tasks
            .into_par_iter()
            .map(|(n, v)| {
                let (setup, r, net) = &nets[n];
                score(setup.tag(), Some(*r), v, &reconstruct(net, &videos[v])?, tau_d)
            })
            .collect::<Result<Vec<_>>>()?,
    );

    let realization = |s: &VideoScore| s.realization.map_or("-".to_string(), |r| r.to_string());
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| vec![s.setup.clone(), realization(s), s.video.to_string(), s.ave_nonsmooth.to_string()])
        .collect();
    write_table(&layout.report(AVENONSMOOTH.name), &AVENONSMOOTH, &rows)?;
    let rows: Vec<Vec<String>> = scores
        .iter()
        .map(|s| vec![s.setup.clone(), realization(s), s.video.to_string(), s.events.to_string()])
        .collect();
    write_table(&layout.report(EVENTS.name), &EVENTS, &rows)?;

    let bins = cfg.analysis.hist_bins;
    let (lo, _, width) = bin_edges(scores.iter().map(|s| s.ave_nonsmooth), bins);
    let hi = lo + width * bins as f64;
    let mut rows = Vec::new();
    let groups = std::iter::once(ORIGINAL).chain(cfg.train.setups.iter().map(|s| s.tag()));
    for group in groups {
        let values: Vec<f64> = scores.iter().filter(|s| s.setup == group).map(|s| s.ave_nonsmooth).collect();
        for (b, count) in histogram(&values, lo, hi, bins).into_iter().enumerate() {
            rows.push(vec![
                group.to_string(),
                (lo + b as f64 * width).to_string(),
                (lo + (b + 1) as f64 * width).to_string(),
                count.to_string(),
            ]);
        }
    }
    write_table(&layout.report(AVENONSMOOTH_HIST.name), &AVENONSMOOTH_HIST, &rows)?;
    Ok(scores)
}

/// Mean AveNonSmooth per group (`original` or setup tag).
pub fn group_means(scores: &[VideoScore]) -> Vec<(String, f64)> {
    let mut groups: Vec<String> = Vec::new();
    for s in scores {
        if !groups.contains(&s.setup) {
            groups.push(s.setup.clone());
        }
    }
    groups
        .into_iter()
        .map(|g| {
            let vals: Vec<f64> = scores.iter().filter(|s| s.setup == g).map(|s| s.ave_nonsmooth).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            (g, mean)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts() {
        let counts = histogram(&[0.0, 0.1, 0.5, 0.99, 1.0], 0.0, 1.0, 4);
        assert_eq!(counts, vec![2, 0, 1, 2]);
        assert_eq!(bin_edges([0.0, 0.0].into_iter(), 4), (0.0, 1.0, 0.25));
    }
}
