//! Discrete nonsmoothness detection on uniformly sampled series.
//!
//! A kink in `f` shows up as a spike in the second-order difference
//! `δ²f(t) = f(t+Δ) + f(t−Δ) − 2f(t)`. A *peak* is a `|δ²|` value more than
//! ten times both the mean and the median of its series; the SMP of a series
//! is the sum of its peak magnitudes.

use crate::error::{Error, Result};
use crate::synth::VideoSequence;

/// Default detection threshold for `|δ²f| > τ_d`.
pub const DEFAULT_TAU_D: f64 = 0.02;

/// Peak factor over mean and median.
pub const PEAK_FACTOR: f64 = 10.0;

/// Signed second-order differences at the interior indices (length `T − 2`);
/// entry `i` belongs to sample `i + 1`.
pub fn second_order_difference(series: &[f64]) -> Result<Vec<f64>> {
    if series.len() < 3 {
        return Err(Error::TooShort {
            what: "second-order difference",
            needed: 3,
            found: series.len(),
        });
    }
    Ok(series.windows(3).map(|w| w[2] + w[0] - 2.0 * w[1]).collect())
}

pub fn abs_second_order_difference(series: &[f64]) -> Result<Vec<f64>> {
    let mut d = second_order_difference(series)?;
    d.iter_mut().for_each(|v| *v = v.abs());
    Ok(d)
}

/// Sample indices `t` (into `series`) with `|δ²f(t)| > tau_d`.
pub fn detect_nonsmooth(series: &[f64], tau_d: f64) -> Result<Vec<usize>> {
    if !(tau_d > 0.0) {
        return Err(Error::InvalidSpec(format!("detection threshold must be positive, got {tau_d}")));
    }
    Ok(abs_second_order_difference(series)?
        .iter()
        .enumerate()
        .filter(|(_, d)| **d > tau_d)
        .map(|(i, _)| i + 1)
        .collect())
}

/// Detected peaks of a `|δ²|` series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakSet {
    /// Strictly increasing indices into the `|δ²|` series.
    pub indices: Vec<usize>,
    pub magnitudes: Vec<f64>,
}

impl PeakSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.magnitudes.iter().sum()
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Values exceeding ten times both the sample mean and the sample median.
/// An all-zero (or empty) series has no peaks.
pub fn find_peaks(abs_d2: &[f64]) -> PeakSet {
    if abs_d2.is_empty() {
        return PeakSet::default();
    }
    let mean = abs_d2.iter().sum::<f64>() / abs_d2.len() as f64;
    if mean == 0.0 {
        return PeakSet::default();
    }
    let bar = PEAK_FACTOR * mean.max(median(abs_d2));
    let (indices, magnitudes) = abs_d2.iter().enumerate().filter(|(_, v)| **v > bar).map(|(i, v)| (i, *v)).unzip();
    PeakSet { indices, magnitudes }
}

/// Sum of peak magnitudes in the `|δ²|` series of a raw node series.
pub fn smp(series: &[f64]) -> Result<f64> {
    Ok(find_peaks(&abs_second_order_difference(series)?).total())
}

/// Mean `|δ²|` over all pixels and interior time steps.
pub fn ave_nonsmooth(video: &VideoSequence) -> Result<f64> {
    let frames = video.frame_count();
    if frames < 3 {
        return Err(Error::TooShort {
            what: "AveNonSmooth",
            needed: 3,
            found: frames,
        });
    }
    let mut total = 0.0;
    for t in 1..frames - 1 {
        let (prev, cur, next) = (video.frame(t - 1), video.frame(t), video.frame(t + 1));
        for i in 0..cur.len() {
            total += (next[i] + prev[i] - 2.0 * cur[i]).abs();
        }
    }
    let terms = (frames - 2) * video.height * video.width;
    Ok(total / terms as f64)
}

/// Per-pixel mean `|δ²|` over time, row-major.
pub fn pixel_ave_nonsmooth(video: &VideoSequence) -> Result<Vec<f64>> {
    let frames = video.frame_count();
    if frames < 3 {
        return Err(Error::TooShort {
            what: "AveNonSmooth",
            needed: 3,
            found: frames,
        });
    }
    let n = video.height * video.width;
    let mut acc = vec![0.0; n];
    for t in 1..frames - 1 {
        let (prev, cur, next) = (video.frame(t - 1), video.frame(t), video.frame(t + 1));
        for i in 0..n {
            acc[i] += (next[i] + prev[i] - 2.0 * cur[i]).abs();
        }
    }
    let denom = (frames - 2) as f64;
    acc.iter_mut().for_each(|v| *v /= denom);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::softplus;
    use proptest::prelude::*;

    fn sample(f: impl Fn(f64) -> f64, from: i32, to: i32, step: f64) -> Vec<f64> {
        (from..=to).map(|k| f(k as f64 * step)).collect()
    }

    #[test]
    fn affine_series_has_zero_curvature() {
        assert_eq!(second_order_difference(&[0., 1., 2., 3.]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(smp(&[1.0, 1.5, 2.0, 2.5, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(second_order_difference(&[1.0, 2.0]), Err(Error::TooShort { found: 2, .. })));
        assert!(smp(&[1.0]).is_err());
    }

    #[test]
    fn relu_kink_versus_softplus() {
        let relu = sample(|x| x.max(0.0), -1, 1, 0.1);
        assert!((abs_second_order_difference(&relu).unwrap()[0] - 0.1).abs() < 1e-12);
        let sp = sample(softplus, -1, 1, 0.1);
        let expected = softplus(0.1) + softplus(-0.1) - 2.0 * softplus(0.0);
        let got = abs_second_order_difference(&sp).unwrap()[0];
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.0025).abs() < 1e-5, "{got}");
    }

    #[test]
    fn relu_detected_only_at_zero() {
        // x = -2.0 .. 2.0 step 0.1; index 20 is x = 0
        let relu = sample(|x| x.max(0.0), -20, 20, 0.1);
        assert_eq!(detect_nonsmooth(&relu, DEFAULT_TAU_D).unwrap(), vec![20]);
        let sp = sample(softplus, -20, 20, 0.1);
        assert!(detect_nonsmooth(&sp, DEFAULT_TAU_D).unwrap().is_empty());
    }

    #[test]
    fn constant_series_has_no_detections() {
        assert!(detect_nonsmooth(&[0.3; 10], 0.02).unwrap().is_empty());
        assert!(detect_nonsmooth(&[0.3; 10], 0.0).is_err());
    }

    #[test]
    fn single_peak_among_small_values() {
        let mut d = vec![0.001; 99];
        d.insert(40, 0.5);
        let peaks = find_peaks(&d);
        assert_eq!(peaks.indices, vec![40]);
        assert_eq!(peaks.magnitudes, vec![0.5]);
    }

    #[test]
    fn flat_profiles_have_no_peaks() {
        assert!(find_peaks(&[0.2; 50]).is_empty());
        assert!(find_peaks(&[0.0; 50]).is_empty());
        assert!(find_peaks(&[]).is_empty());
    }

    /// Builds a series whose |δ²| is exactly `profile` (integrating twice).
    fn integrate(profile: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0, 0.0];
        let mut slope = 0.0;
        for d in profile {
            slope += d;
            let next = f[f.len() - 1] + slope;
            f.push(next);
        }
        f
    }

    #[test]
    fn smp_sums_peak_magnitudes() {
        // alternating-sign background keeps the series bounded
        let mut profile: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 0.001 } else { -0.001 }).collect();
        profile[50] = 0.5;
        profile[150] = -0.3;
        let series = integrate(&profile);
        let d = abs_second_order_difference(&series).unwrap();
        for (a, b) in d.iter().zip(&profile) {
            assert!((a - b.abs()).abs() < 1e-9);
        }
        // brute-force enumeration of the peak rule
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let med = median(&d);
        let brute: f64 = d.iter().filter(|v| **v > 10.0 * mean && **v > 10.0 * med).sum();
        let got = smp(&series).unwrap();
        assert!((got - brute).abs() < 1e-12);
        assert!((got - 0.8).abs() < 1e-9, "{got}");
    }

    #[test]
    fn smp_is_inherited_under_summation() {
        let mut p1 = vec![0.0; 200];
        let mut p2 = vec![0.0; 200];
        p1[50] = 0.5;
        p2[150] = -0.3;
        let (f1, f2) = (integrate(&p1), integrate(&p2));
        let sum: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| a + b).collect();
        let (s1, s2, s12) = (smp(&f1).unwrap(), smp(&f2).unwrap(), smp(&sum).unwrap());
        assert!((s12 - (s1 + s2)).abs() < 1e-9, "{s12} vs {s1} + {s2}");
        assert!((s12 - 0.8).abs() < 1e-9);
    }

    #[test]
    fn ave_nonsmooth_hand_value() {
        let video = VideoSequence::new(1, 1, vec![0., 0., 1., 1.], 1.0).unwrap();
        assert!((ave_nonsmooth(&video).unwrap() - 1.0).abs() < 1e-15);
        let constant = VideoSequence::new(2, 2, vec![0.4; 20], 1.0).unwrap();
        assert_eq!(ave_nonsmooth(&constant).unwrap(), 0.0);
        let short = VideoSequence::new(1, 1, vec![0., 1.], 1.0).unwrap();
        assert!(ave_nonsmooth(&short).is_err());
        assert_eq!(pixel_ave_nonsmooth(&video).unwrap(), vec![1.0]);
    }

    proptest! {
        #[test]
        fn second_difference_scales_linearly(xs in proptest::collection::vec(-10.0f64..10.0, 3..40), a in -5.0f64..5.0) {
            let scaled: Vec<f64> = xs.iter().map(|x| a * x).collect();
            let d = second_order_difference(&xs).unwrap();
            let ds = second_order_difference(&scaled).unwrap();
            for (p, q) in d.iter().zip(&ds) {
                prop_assert!((a * p - q).abs() <= 1e-9 * (1.0 + p.abs() * a.abs()));
            }
        }

        #[test]
        fn smp_is_scale_equivariant(xs in proptest::collection::vec(-1.0f64..1.0, 5..60), a in 0.1f64..8.0, neg in any::<bool>()) {
            let a = if neg { -a } else { a };
            let d = abs_second_order_difference(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| a * x).collect();
            let ds = abs_second_order_difference(&scaled).unwrap();
            // only compare when rounding cannot flip a borderline peak decision
            prop_assume!(find_peaks(&d).indices == find_peaks(&ds).indices);
            let lhs = smp(&scaled).unwrap();
            let rhs = a.abs() * smp(&xs).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }

        #[test]
        fn raising_threshold_never_adds_detections(xs in proptest::collection::vec(-1.0f64..1.0, 3..60), t1 in 0.001f64..1.0, t2 in 0.001f64..1.0) {
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            let at_lo = detect_nonsmooth(&xs, lo).unwrap();
            let at_hi = detect_nonsmooth(&xs, hi).unwrap();
            prop_assert!(at_hi.iter().all(|i| at_lo.contains(i)));
        }

        #[test]
        fn peaks_satisfy_the_rule(xs in proptest::collection::vec(0.0f64..1.0, 1..80)) {
            let peaks = find_peaks(&xs);
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let med = median(&xs);
            prop_assert!(peaks.indices.windows(2).all(|w| w[0] < w[1]));
            for &m in &peaks.magnitudes {
                prop_assert!(m > 10.0 * mean && m > 10.0 * med);
            }
        }
    }
}
