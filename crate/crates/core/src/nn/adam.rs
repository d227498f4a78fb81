use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators for a list of parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = shapes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        AdamState { config, m, v, t: 0 }
    }

    pub fn for_params(config: AdamConfig, params: &[&[f64]]) -> Self {
        Self::new(config, params.iter().map(|p| p.len()))
    }

    /// One bias-corrected Adam update applied in place.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape("adam_step", self.m.len(), (params.len(), grads.len())));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::shape("adam_step tensor", m.len(), (p.len(), g.len())));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = vec![0.0];
        let mut state = AdamState::new(AdamConfig::default(), [1]);
        state.step(&mut [w.as_mut_slice()], &[&[1.0]]).unwrap();
        assert!((w[0] + 0.001).abs() < 1e-9, "{}", w[0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut w = vec![0.3, -1.2];
        let mut state = AdamState::new(AdamConfig::default(), [2]);
        state.step(&mut [w.as_mut_slice()], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(w, vec![0.3, -1.2]);
    }

    #[test]
    fn moments_follow_exponential_moving_average() {
        let g = 0.7;
        let cfg = AdamConfig::default();
        let mut w = vec![1.0];
        let mut state = AdamState::new(cfg, [1]);
        for _ in 0..2 {
            state.step(&mut [w.as_mut_slice()], &[&[g]]).unwrap();
        }
        // closed form after two constant-gradient steps
        let m2 = (1.0 - cfg.beta1) * g * (1.0 + cfg.beta1);
        let v2 = (1.0 - cfg.beta2) * g * g * (1.0 + cfg.beta2);
        assert!((state.m[0][0] - m2).abs() < 1e-15);
        assert!((state.v[0][0] - v2).abs() < 1e-15);
        assert_eq!(state.t, 2);
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let mut w = vec![0.0; 3];
        let mut state = AdamState::new(AdamConfig::default(), [2]);
        assert!(state.step(&mut [w.as_mut_slice()], &[&[0.0; 3]]).is_err());
        assert_eq!(state.t, 0);
    }
}
