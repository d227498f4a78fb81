use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl RegressionResult {
    pub fn line(&self) -> LinearFit {
        LinearFit {
            slope: self.slope,
            intercept: self.intercept,
        }
    }
}

/// `y = slope·x + intercept`, clamped at zero when applied to SMPs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearFit {
    pub const IDENTITY: LinearFit = LinearFit { slope: 1.0, intercept: 0.0 };

    pub fn apply(&self, x: f64) -> f64 {
        (self.slope * x + self.intercept).max(0.0)
    }
}

fn check_lengths(a: &[f64], b: &[f64], what: &'static str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(what, a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(Error::TooShort { what, needed: 3, found: a.len() });
    }
    Ok(())
}

/// Ordinary least squares of `real` on `pred`.
pub fn linreg_r2(pred: &[f64], real: &[f64]) -> Result<RegressionResult> {
    check_lengths(pred, real, "linreg_r2")?;
    let mut acc = PearsonAccumulator::default();
    pred.iter().zip(real).for_each(|(x, y)| acc.push(*x, *y));
    if acc.sxx <= 0.0 {
        return Err(Error::Degenerate("linreg_r2: constant predictor".into()));
    }
    if acc.syy <= 0.0 {
        return Err(Error::Degenerate("linreg_r2: constant response".into()));
    }
    let slope = acc.sxy / acc.sxx;
    let intercept = acc.mean_y - slope * acc.mean_x;
    let ss_res: f64 = pred.iter().zip(real).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RegressionResult {
        slope,
        intercept,
        r2: 1.0 - ss_res / acc.syy,
    })
}

/// Streaming Pearson correlation (Welford co-moments).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PearsonAccumulator {
    pub n: u64,
    mean_x: f64,
    mean_y: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

impl PearsonAccumulator {
    pub fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.sxx += dx * (x - self.mean_x);
        self.syy += dy * (y - self.mean_y);
        self.sxy += dx * (y - self.mean_y);
    }

    pub fn merge(&mut self, other: &PearsonAccumulator) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let dx = other.mean_x - self.mean_x;
        let dy = other.mean_y - self.mean_y;
        self.sxx += other.sxx + dx * dx * na * nb / n;
        self.syy += other.syy + dy * dy * na * nb / n;
        self.sxy += other.sxy + dx * dy * na * nb / n;
        self.mean_x += dx * nb / n;
        self.mean_y += dy * nb / n;
        self.n += other.n;
    }

    pub fn value(&self) -> Result<f64> {
        if self.n < 3 {
            return Err(Error::TooShort {
                what: "pearson",
                needed: 3,
                found: self.n as usize,
            });
        }
        if self.sxx <= 0.0 || self.syy <= 0.0 {
            return Err(Error::Degenerate("pearson: zero variance".into()));
        }
        Ok((self.sxy / (self.sxx * self.syy).sqrt()).clamp(-1.0, 1.0))
    }
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_lengths(xs, ys, "pearson")?;
    let mut acc = PearsonAccumulator::default();
    xs.iter().zip(ys).for_each(|(x, y)| acc.push(*x, *y));
    acc.value()
}

/// 1-D earth mover's distance between two empirical distributions:
/// the integral of |F_a - F_b| over the real line.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("wasserstein1 samples"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wasserstein1 samples"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}
