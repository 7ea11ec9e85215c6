use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Mode, Real, Tensor};

use super::dims4;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization state.
///
/// `gamma` and `beta` are trainable; the moving statistics are updated as
/// `moving = momentum * moving + (1 - momentum) * batch` on every
/// training-mode call.
#[derive(Debug, Clone)]
pub struct BatchNorm<F: Real> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub moving_mean: Vec<F>,
    pub moving_var: Vec<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Real> BatchNorm<F> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::param(vec![channels], vec![F::one(); channels]).expect("shape"),
            beta: Tensor::param(vec![channels], vec![F::zero(); channels]).expect("shape"),
            moving_mean: vec![F::zero(); channels],
            moving_var: vec![F::one(); channels],
            momentum: F::from_f64(BN_MOMENTUM),
            eps: F::from_f64(BN_EPS),
        }
    }

    pub fn channels(&self) -> usize {
        self.moving_mean.len()
    }
}

pub fn batch_norm<F: Real>(input: &Tensor<F>, bn: &mut BatchNorm<F>, mode: Mode) -> Result<Tensor<F>> {
    let (n, c, h, w) = check_input(input, bn)?;
    if mode == Mode::Eval {
        return batch_norm_inference(input, bn);
    }
    let plane = h * w;
    let count = n * plane;
    if count < 2 {
        return Err(TensorError::invalid(
            "batch_norm",
            format!("training needs at least 2 values per channel, found {count}"),
        ));
    }
    let (mean, var) = {
        let x = input.data();
        let mut mean = vec![F::zero(); c];
        let mut var = vec![F::zero(); c];
        // statistics are accumulated in f64
        for ch in 0..c {
            let values = || (0..n).flat_map(|b| x[(b * c + ch) * plane..][..plane].iter().map(|&v| Real::to_f64(v)));
            let m = values().sum::<f64>() / count as f64;
            let v = values().map(|xv| (xv - m) * (xv - m)).sum::<f64>() / count as f64;
            mean[ch] = F::from_f64(m);
            var[ch] = F::from_f64(v);
        }
        (mean, var)
    };
    let keep = bn.momentum;
    for ch in 0..c {
        bn.moving_mean[ch] = keep * bn.moving_mean[ch] + (F::one() - keep) * mean[ch];
        bn.moving_var[ch] = keep * bn.moving_var[ch] + (F::one() - keep) * var[ch];
    }
    Ok(normalize(input, bn, &mean, &var, Mode::Train))
}

/// Evaluation-mode batch normalization using the moving statistics; does not
/// touch the state.
pub fn batch_norm_inference<F: Real>(input: &Tensor<F>, bn: &BatchNorm<F>) -> Result<Tensor<F>> {
    check_input(input, bn)?;
    Ok(normalize(input, bn, &bn.moving_mean, &bn.moving_var, Mode::Eval))
}

fn check_input<F: Real>(input: &Tensor<F>, bn: &BatchNorm<F>) -> Result<(usize, usize, usize, usize)> {
    let dims = dims4(input, "batch_norm")?;
    if dims.1 != bn.channels() {
        return Err(TensorError::ShapeMismatch {
            op: "batch_norm",
            expected: vec![bn.channels()],
            found: vec![dims.1],
        });
    }
    Ok(dims)
}

fn normalize<F: Real>(input: &Tensor<F>, bn: &BatchNorm<F>, mean: &[F], var: &[F], mode: Mode) -> Tensor<F> {
    let [n, c, h, w] = input.shape() else { unreachable!("checked 4-D") };
    let (n, c, plane) = (*n, *c, h * w);
    let x = input.data();
    let gamma = bn.gamma.data();
    let beta = bn.beta.data();
    let inv_std: Vec<F> = var.iter().map(|&v| F::one() / (v + bn.eps).sqrt()).collect();
    let mut xhat = vec![F::zero(); x.len()];
    let mut out = vec![F::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let base = (b * c + ch) * plane;
            for i in base..base + plane {
                xhat[i] = (x[i] - mean[ch]) * inv_std[ch];
                out[i] = gamma[ch] * xhat[i] + beta[ch];
            }
        }
    }
    drop((x, gamma, beta));
    Tensor::from_op(
        input.shape().to_vec(),
        out,
        vec![input.clone(), bn.gamma.clone(), bn.beta.clone()],
        Box::new(BatchNormBackward { xhat, inv_std, n, c, plane, mode }),
    )
}

struct BatchNormBackward<F> {
    xhat: Vec<F>,
    inv_std: Vec<F>,
    n: usize,
    c: usize,
    plane: usize,
    mode: Mode,
}

impl<F: Real> GradFn<F> for BatchNormBackward<F> {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let gamma = parents[1].data();
        let (n, c, plane) = (self.n, self.c, self.plane);
        let mut sum_gx = vec![0.0f64; c];
        let mut sum_g = vec![0.0f64; c];
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                for (&g, &xh) in grad[base..base + plane].iter().zip(&self.xhat[base..base + plane]) {
                    sum_gx[ch] += Real::to_f64(g * xh);
                    sum_g[ch] += Real::to_f64(g);
                }
            }
        }
        let dgamma: Vec<F> = sum_gx.iter().map(|&v| F::from_f64(v)).collect();
        let dbeta: Vec<F> = sum_g.iter().map(|&v| F::from_f64(v)).collect();
        let mut gx = vec![F::zero(); grad.len()];
        let count = (n * plane) as f64;
        for b in 0..n {
            for ch in 0..c {
                let base = (b * c + ch) * plane;
                let scale = gamma[ch] * self.inv_std[ch];
                let (mean_g, mean_gx) = (F::from_f64(sum_g[ch] / count), F::from_f64(sum_gx[ch] / count));
                for i in base..base + plane {
                    gx[i] = match self.mode {
                        // dx = gamma/std * (dy - mean(dy) - xhat * mean(dy * xhat))
                        Mode::Train => scale * (grad[i] - mean_g - self.xhat[i] * mean_gx),
                        Mode::Eval => scale * grad[i],
                    };
                }
            }
        }
        vec![Some(gx), Some(dgamma), Some(dbeta)]
    }
}
