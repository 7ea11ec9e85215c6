use crate::error::{Result, TensorError};
use crate::{Real, Tensor};

/// Adam hyperparameters. The defaults are the usual ones with the learning
/// rate used for all tempo/key training runs.
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
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of a single parameter buffer. `t` is the
/// 1-based step number.
pub fn adam_update<F: Real>(w: &mut [F], g: &[F], m: &mut [F], v: &mut [F], t: u64, cfg: &AdamConfig) {
    let b1 = F::from_f64(cfg.beta1);
    let b2 = F::from_f64(cfg.beta2);
    let c1 = F::from_f64(1.0 - cfg.beta1.powi(t as i32));
    let c2 = F::from_f64(1.0 - cfg.beta2.powi(t as i32));
    let lr = F::from_f64(cfg.lr);
    let eps = F::from_f64(cfg.eps);
    for i in 0..w.len() {
        m[i] = b1 * m[i] + (F::one() - b1) * g[i];
        v[i] = b2 * v[i] + (F::one() - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        w[i] = w[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Adam optimizer state for a fixed, ordered list of parameters.
#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    pub config: AdamConfig,
    t: u64,
    first: Vec<Vec<F>>,
    second: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(config: AdamConfig, params: &[Tensor<F>]) -> Self {
        Adam {
            config,
            t: 0,
            first: params.iter().map(|p| vec![F::zero(); p.numel()]).collect(),
            second: params.iter().map(|p| vec![F::zero(); p.numel()]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Applies one update using the gradients accumulated on `params`.
    /// A parameter without a gradient is treated as having a zero gradient.
    pub fn step(&mut self, params: &[Tensor<F>]) -> Result<()> {
        if params.len() != self.first.len() {
            return Err(TensorError::invalid(
                "adam",
                format!("expected {} parameters, found {}", self.first.len(), params.len()),
            ));
        }
        for (i, p) in params.iter().enumerate() {
            if p.numel() != self.first[i].len() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam",
                    expected: vec![self.first[i].len()],
                    found: p.shape().to_vec(),
                });
            }
        }
        self.t += 1;
        for (i, p) in params.iter().enumerate() {
            let g = p.grad().unwrap_or_else(|| vec![F::zero(); p.numel()]);
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            p.update_data(|w| adam_update(w, &g, m, v, self.t, &self.config));
        }
        Ok(())
    }
}
