use rand::Rng;

use super::{gaussian, MIN_PAIRS};
use crate::error::{Error, Result};

pub const DEFAULT_SPLIT: f64 = 0.0025;

const EM_MAX_ITERS: usize = 100;
const EM_TOL: f64 = 1e-8;

/// Output SMP distribution for inputs below the split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallBranch {
    pub mu0: f64,
    pub sigma0: f64,
}

/// Two-component mixture for inputs at or above the split: `N(x, sigma1)`
/// with weight `pi0`, else `N(mu2, sigma2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureBranch {
    pub pi0: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
}

/// A branch is `None` when it had too few pairs to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPoolChannelParams {
    pub a: f64,
    pub small: Option<SmallBranch>,
    pub mixture: Option<MixtureBranch>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / v.len() as f64;
    (mean, var.sqrt())
}

fn log_normal(y: f64, mean: f64, std: f64) -> f64 {
    let z = (y - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn fit_mixture(pairs: &[(f64, f64)]) -> MixtureBranch {
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    // keeps densities finite when a component collapses onto identical values
    let floor = (1e-9 * scale).max(1e-12);
    let mut dev: Vec<f64> = pairs.iter().map(|(x, y)| (y - x).abs()).collect();
    dev.sort_by(f64::total_cmp);
    let (mu2, sigma2) = mean_std(&ys);
    let mut m = MixtureBranch {
        pi0: 0.5,
        sigma1: dev[dev.len() / 2].max(floor),
        mu2,
        sigma2: sigma2.max(floor),
    };
    let mut resp = vec![0.0; pairs.len()];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITERS {
        let mut ll = 0.0;
        for ((x, y), r) in pairs.iter().zip(resp.iter_mut()) {
            let l1 = m.pi0.ln() + log_normal(*y, *x, m.sigma1);
            let l2 = (1.0 - m.pi0).ln() + log_normal(*y, m.mu2, m.sigma2);
            let total = log_add(l1, l2);
            *r = (l1 - total).exp();
            ll += total;
        }
        let w1: f64 = resp.iter().sum();
        let w2 = pairs.len() as f64 - w1;
        m.pi0 = w1 / pairs.len() as f64;
        if w1 > 0.0 {
            let s = pairs.iter().zip(&resp).map(|((x, y), r)| r * (y - x).powi(2)).sum::<f64>();
            m.sigma1 = (s / w1).sqrt().max(floor);
        }
        if w2 > 0.0 {
            m.mu2 = pairs.iter().zip(&resp).map(|((_, y), r)| (1.0 - r) * y).sum::<f64>() / w2;
            let s = pairs.iter().zip(&resp).map(|((_, y), r)| (1.0 - r) * (y - m.mu2).powi(2)).sum::<f64>();
            m.sigma2 = (s / w2).sqrt().max(floor);
        }
        if (ll - prev_ll).abs() < EM_TOL {
            break;
        }
        prev_ll = ll;
    }
    m
}

/// Fits both branches, split at `a`. Branches with fewer than
/// [`MIN_PAIRS`] pairs come back `None`.
pub fn fit_maxpool_channel(pairs: &[(f64, f64)], a: f64) -> Result<MaxPoolChannelParams> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidSpec(format!("split threshold must be positive, got {a}")));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("fit_maxpool_channel pairs"));
    }
    if pairs.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::NonFinite("fit_maxpool_channel pairs"));
    }
    let (small, large): (Vec<(f64, f64)>, Vec<(f64, f64)>) = pairs.iter().partition(|(x, _)| *x < a);
    let small = (small.len() >= MIN_PAIRS).then(|| {
        let (mu0, sigma0) = mean_std(&small.iter().map(|p| p.1).collect::<Vec<_>>());
        SmallBranch { mu0, sigma0 }
    });
    let mixture = (large.len() >= MIN_PAIRS).then(|| fit_mixture(&large));
    Ok(MaxPoolChannelParams { a, small, mixture })
}

pub fn sample_maxpool_channel(x: f64, params: &MaxPoolChannelParams, rng: &mut impl Rng) -> Result<f64> {
    let y = if x < params.a {
        let b = params.small.ok_or(Error::UnfitBranch("max-pool channel x < a"))?;
        gaussian(rng, b.mu0, b.sigma0)
    } else {
        let m = params.mixture.ok_or(Error::UnfitBranch("max-pool channel x >= a"))?;
        if rng.gen::<f64>() < m.pi0 {
            gaussian(rng, x, m.sigma1)
        } else {
            gaussian(rng, m.mu2, m.sigma2)
        }
    };
    Ok(y.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pure_diagonal() {
        let pairs: Vec<(f64, f64)> = (0..200).map(|i| (0.01 + i as f64 * 0.001, 0.01 + i as f64 * 0.001)).collect();
        let p = fit_maxpool_channel(&pairs, DEFAULT_SPLIT).unwrap();
        let m = p.mixture.unwrap();
        assert!(m.pi0 > 0.999, "{m:?}");
        assert!(m.sigma1 < 1e-6, "{m:?}");
        assert!(p.small.is_none());
    }

    #[test]
    fn small_branch_only() {
        let pairs: Vec<(f64, f64)> = (0..50).map(|i| (0.001, 0.01 + (i % 5) as f64 * 0.001)).collect();
        let p = fit_maxpool_channel(&pairs, DEFAULT_SPLIT).unwrap();
        assert!(p.mixture.is_none());
        let s = p.small.unwrap();
        assert!((s.mu0 - 0.012).abs() < 1e-12);
        assert!((s.sigma0 - 2f64.sqrt() * 1e-3).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(sample_maxpool_channel(0.5, &p, &mut rng), Err(Error::UnfitBranch(_))));
    }

    #[test]
    fn round_trip() {
        let truth = MaxPoolChannelParams {
            a: DEFAULT_SPLIT,
            small: None,
            mixture: Some(MixtureBranch {
                pi0: 0.6,
                sigma1: 0.005,
                mu2: 0.02,
                sigma2: 0.01,
            }),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<(f64, f64)> = (0..20_000)
            .map(|_| {
                let x = rng.gen_range(0.05..0.3);
                (x, sample_maxpool_channel(x, &truth, &mut rng).unwrap())
            })
            .collect();
        let m = fit_maxpool_channel(&pairs, DEFAULT_SPLIT).unwrap().mixture.unwrap();
        assert!((m.pi0 - 0.6).abs() < 0.05, "{m:?}");
        assert!((m.sigma1 / 0.005 - 1.0).abs() < 0.2, "{m:?}");
        assert!((m.mu2 / 0.02 - 1.0).abs() < 0.2, "{m:?}");
        assert!((m.sigma2 / 0.01 - 1.0).abs() < 0.2, "{m:?}");
    }

    #[test]
    fn sampler_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = MaxPoolChannelParams {
            a: DEFAULT_SPLIT,
            small: Some(SmallBranch { mu0: 0.004, sigma0: 0.0 }),
            mixture: Some(MixtureBranch {
                pi0: 1.0,
                sigma1: 0.0,
                mu2: 0.0,
                sigma2: 0.0,
            }),
        };
        assert_eq!(sample_maxpool_channel(0.001, &p, &mut rng).unwrap(), 0.004);
        assert_eq!(sample_maxpool_channel(0.2, &p, &mut rng).unwrap(), 0.2);

        let mix = MixtureBranch {
            pi0: 0.3,
            sigma1: 0.01,
            mu2: 0.5,
            sigma2: 0.02,
        };
        let p = MaxPoolChannelParams { mixture: Some(mix), ..p };
        let n = 20_000;
        let x = 0.2;
        let draws: Vec<f64> = (0..n).map(|_| sample_maxpool_channel(x, &p, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let expected = mix.pi0 * x + (1.0 - mix.pi0) * mix.mu2;
        let var = mix.pi0 * (mix.sigma1.powi(2) + x * x) + (1.0 - mix.pi0) * (mix.sigma2.powi(2) + mix.mu2.powi(2)) - expected * expected;
        assert!((mean - expected).abs() < 3.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn rejects_bad_split() {
        assert!(fit_maxpool_channel(&[(0.1, 0.1); 20], 0.0).is_err());
        assert!(fit_maxpool_channel(&[], 0.1).is_err());
    }
}
