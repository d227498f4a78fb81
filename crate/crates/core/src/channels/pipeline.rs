use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{predict_conv_smp, LinearFit, sample_maxpool_channel, sample_relu_channel, ConvChannelModel, MaxPoolChannelParams, ReluChannelParams};
use crate::error::{Error, Result};
use crate::probe::SmpMap;
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolStage {
    pub size: usize,
    pub stride: usize,
    pub params: MaxPoolChannelParams,
}

fn pooled_dim(m: usize, k: usize, s: usize) -> Result<usize> {
    if k == 0 || s == 0 || m < k || (m - k) % s != 0 {
        return Err(Error::shape("monte_carlo_pipeline pool window", (m, k, s), "windows tiling the map"));
    }
    Ok((m - k) / s + 1)
}

/// Simulates conv -> ReLU channel -> max-pool channel on an input SMP map.
/// `conv_line` maps the weighted-sum prediction onto the fitted conv output
/// scale before the ReLU stage. Returns every pooled output sample, trial-major. Trial `t` draws from
/// its own stream seeded by `derive_seed(seed, t)`, so results do not
/// depend on scheduling.
pub fn monte_carlo_pipeline(
    input: &SmpMap,
    conv: &ConvChannelModel,
    conv_line: LinearFit,
    relu: &ReluChannelParams,
    pool: &PoolStage,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    relu.validate()?;
    let mut pre = predict_conv_smp(input, conv)?;
    pre.values.iter_mut().for_each(|x| *x = conv_line.apply(*x));
    let [c, h, w] = pre.shape;
    let (oh, ow) = (pooled_dim(h, pool.size, pool.stride)?, pooled_dim(w, pool.size, pool.stride)?);
    let per_trial = (0..n_trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
            let relu_out: Vec<f64> = pre.values.iter().map(|x| sample_relu_channel(*x, relu, &mut rng)).collect();
            let mut out = Vec::with_capacity(c * oh * ow);
            for ch in 0..c {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut x = f64::NEG_INFINITY;
                        for i in 0..pool.size {
                            for j in 0..pool.size {
                                x = x.max(relu_out[(ch * h + r * pool.stride + i) * w + col * pool.stride + j]);
                            }
                        }
                        out.push(sample_maxpool_channel(x, &pool.params, &mut rng)?);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(per_trial.concat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{ConvKind, MixtureBranch, SmallBranch, WeightMode, DEFAULT_SPLIT};
    use crate::nn::ConvSpec;
    use crate::tensor::Tensor4;

    fn deterministic_pool() -> PoolStage {
        PoolStage {
            size: 2,
            stride: 2,
            params: MaxPoolChannelParams {
                a: DEFAULT_SPLIT,
                small: Some(SmallBranch { mu0: 0.0, sigma0: 0.0 }),
                mixture: Some(MixtureBranch {
                    pi0: 1.0,
                    sigma1: 0.0,
                    mu2: 0.0,
                    sigma2: 0.0,
                }),
            },
        }
    }

    const IDENT: ReluChannelParams = ReluChannelParams {
        theta: 1.0,
        sigma: 0.0,
        eps_zero: 0.0,
    };

    fn conv(kernel: Vec<f64>) -> ConvChannelModel {
        ConvChannelModel::new(ConvKind::Conv, ConvSpec::new(2, 2, 3, 1, 1), WeightMode::Actual(Tensor4::from_vec([2, 2, 3, 3], kernel).unwrap())).unwrap()
    }

    #[test]
    fn degenerate_channels_give_zero() {
        let out = monte_carlo_pipeline(&SmpMap::zeros(3, [2, 4, 4]), &conv(vec![0.3; 36]), LinearFit::IDENTITY, &IDENT, &deterministic_pool(), 5, 1).unwrap();
        assert_eq!(out.len(), 5 * 2 * 2 * 2);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn deterministic_channels_match_brute_force() {
        let kernel: Vec<f64> = (0..36).map(|i| ((i * 7) % 11) as f64 * 0.05).collect();
        let input: Vec<f64> = (0..32).map(|i| 0.05 + ((i * 5) % 13) as f64 * 0.02).collect();
        let smp = SmpMap {
            boundary: 3,
            shape: [2, 4, 4],
            values: input.clone(),
        };
        let out = monte_carlo_pipeline(&smp, &conv(kernel.clone()), LinearFit::IDENTITY, &IDENT, &deterministic_pool(), 3, 9).unwrap();
        // brute force: direct receptive-field sums then 2x2 max
        let mut pre = [[[0.0f64; 4]; 4]; 2];
        for co in 0..2 {
            for r in 0..4 {
                for c in 0..4 {
                    for ci in 0..2 {
                        for i in 0..3 {
                            for j in 0..3 {
                                let (y, x) = (r as i64 + i as i64 - 1, c as i64 + j as i64 - 1);
                                if (0..4).contains(&y) && (0..4).contains(&x) {
                                    pre[co][r][c] += kernel[((co * 2 + ci) * 3 + i) * 3 + j] * input[(ci * 4 + y as usize) * 4 + x as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let mut expected = Vec::new();
        for plane in &pre {
            for r in 0..2 {
                for c in 0..2 {
                    expected.push(plane[2 * r][2 * c].max(plane[2 * r][2 * c + 1]).max(plane[2 * r + 1][2 * c]).max(plane[2 * r + 1][2 * c + 1]));
                }
            }
        }
        assert!(expected.iter().all(|v| *v >= DEFAULT_SPLIT));
        for trial in out.chunks(8) {
            for (a, b) in trial.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn trial_streams_are_independent_of_count() {
        let smp = SmpMap {
            boundary: 3,
            shape: [2, 4, 4],
            values: (0..32).map(|i| 0.01 * (i % 7) as f64).collect(),
        };
        let relu = ReluChannelParams {
            theta: 0.6,
            sigma: 0.01,
            eps_zero: 0.0,
        };
        let mut pool = deterministic_pool();
        pool.params.mixture = Some(MixtureBranch {
            pi0: 0.7,
            sigma1: 0.005,
            mu2: 0.02,
            sigma2: 0.01,
        });
        pool.params.small = Some(SmallBranch { mu0: 0.001, sigma0: 0.001 });
        let model = conv(vec![0.2; 36]);
        let short = monte_carlo_pipeline(&smp, &model, LinearFit::IDENTITY, &relu, &pool, 200, 4).unwrap();
        let long = monte_carlo_pipeline(&smp, &model, LinearFit::IDENTITY, &relu, &pool, 400, 4).unwrap();
        // first trials are identical; means agree within sampling error
        assert_eq!(&long[..short.len()], short.as_slice());
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let sd = (long.iter().map(|v| (v - mean(&long)).powi(2)).sum::<f64>() / long.len() as f64).sqrt();
        assert!((mean(&short) - mean(&long)).abs() < 4.0 * sd / (short.len() as f64).sqrt());
    }

    #[test]
    fn conv_line_rescales_before_relu() {
        let line = LinearFit {
            slope: 0.5,
            intercept: 0.01,
        };
        let out = monte_carlo_pipeline(&SmpMap::zeros(3, [2, 4, 4]), &conv(vec![0.3; 36]), line, &IDENT, &deterministic_pool(), 2, 1).unwrap();
        assert_eq!(out.len(), 16);
        assert!(out.iter().all(|v| (v - 0.01).abs() < 1e-15));
        let negative = LinearFit {
            slope: 1.0,
            intercept: -1.0,
        };
        let out = monte_carlo_pipeline(&SmpMap::zeros(3, [2, 4, 4]), &conv(vec![0.3; 36]), negative, &IDENT, &deterministic_pool(), 1, 1).unwrap();
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_untiled_pool() {
        let smp = SmpMap::zeros(3, [2, 5, 5]);
        assert!(monte_carlo_pipeline(&smp, &conv(vec![0.1; 36]), LinearFit::IDENTITY, &IDENT, &deterministic_pool(), 1, 0).is_err());
    }
}
