use rand::Rng;

use super::{gaussian, MIN_PAIRS};
use crate::error::{Error, Result};

/// Bernoulli–Gaussian channel: an input SMP is killed with probability
/// `1 - theta`, otherwise passed with Gaussian jitter of std `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReluChannelParams {
    pub theta: f64,
    pub sigma: f64,
    pub eps_zero: f64,
}

impl ReluChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) || !(self.sigma >= 0.0) || !(self.eps_zero >= 0.0) {
            return Err(Error::InvalidSpec(format!("invalid relu channel {self:?}")));
        }
        Ok(())
    }
}

/// Zero tolerance for a layer whose largest SMP is `max_smp`.
pub fn eps_zero_for(max_smp: f64) -> f64 {
    1e-6 * max_smp
}

fn check_pairs(pairs: &[(f64, f64)], what: &'static str) -> Result<()> {
    if pairs.len() < MIN_PAIRS {
        return Err(Error::TooShort {
            what,
            needed: MIN_PAIRS,
            found: pairs.len(),
        });
    }
    if pairs.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::NonFinite(what));
    }
    Ok(())
}

pub fn fit_relu_channel(pairs: &[(f64, f64)], eps_zero: f64) -> Result<ReluChannelParams> {
    check_pairs(pairs, "fit_relu_channel pairs")?;
    let passed: Vec<f64> = pairs.iter().filter(|(_, y)| *y > eps_zero).map(|(x, y)| y - x).collect();
    let theta = passed.len() as f64 / pairs.len() as f64;
    let sigma = if passed.is_empty() {
        0.0
    } else {
        let mean = passed.iter().sum::<f64>() / passed.len() as f64;
        (passed.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / passed.len() as f64).sqrt()
    };
    Ok(ReluChannelParams { theta, sigma, eps_zero })
}

pub fn sample_relu_channel(x: f64, params: &ReluChannelParams, rng: &mut impl Rng) -> f64 {
    if rng.gen::<f64>() >= params.theta {
        return 0.0;
    }
    gaussian(rng, x, params.sigma).max(0.0)
}
