use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Real, Tensor};

use super::dims4;

pub fn relu<F: Real>(input: &Tensor<F>) -> Tensor<F> {
    // written as a comparison so NaN propagates instead of becoming 0
    let out = input.data().iter().map(|&v| if v < F::zero() { F::zero() } else { v }).collect();
    Tensor::from_op(input.shape().to_vec(), out, vec![input.clone()], Box::new(ReluBackward))
}

struct ReluBackward;
impl<F: Real> GradFn<F> for ReluBackward {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let x = parents[0].data();
        let g = grad
            .iter()
            .zip(x.iter())
            .map(|(&g, &v)| if v > F::zero() { g } else { F::zero() })
            .collect();
        vec![Some(g)]
    }
}

/// Averages every spatial position of each channel: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool<F: Real>(input: &Tensor<F>) -> Result<Tensor<F>> {
    let (n, c, h, w) = dims4(input, "global_avg_pool")?;
    let plane = h * w;
    let out = input
        .data()
        .chunks(plane)
        .map(|p| F::from_f64(p.iter().map(|&v| Real::to_f64(v)).sum::<f64>() / plane as f64))
        .collect();
    Ok(Tensor::from_op(vec![n, c], out, vec![input.clone()], Box::new(GapBackward { plane })))
}

struct GapBackward {
    plane: usize,
}
impl<F: Real> GradFn<F> for GapBackward {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let inv = F::one() / F::from_usize(self.plane);
        let g = grad
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, self.plane))
            .collect();
        vec![Some(g)]
    }
}

/// Row-wise softmax of a `[N, C]` tensor, computed with max subtraction.
pub fn softmax<F: Real>(input: &Tensor<F>) -> Result<Tensor<F>> {
    let &[_, c] = input.shape() else {
        return Err(TensorError::invalid(
            "softmax",
            format!("expected [N, C], found {:?}", input.shape()),
        ));
    };
    let mut out = input.to_vec();
    for row in out.chunks_mut(c) {
        let m = row.iter().copied().fold(F::neg_infinity(), F::max);
        // accumulate in f64 so wide rows still sum to 1 in single precision
        let mut s = 0.0f64;
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += Real::to_f64(*v);
        }
        row.iter_mut().for_each(|v| *v = F::from_f64(Real::to_f64(*v) / s));
    }
    let saved = out.clone();
    Ok(Tensor::from_op(
        input.shape().to_vec(),
        out,
        vec![input.clone()],
        Box::new(SoftmaxBackward { probs: saved, classes: c }),
    ))
}

struct SoftmaxBackward<F> {
    probs: Vec<F>,
    classes: usize,
}
impl<F: Real> GradFn<F> for SoftmaxBackward<F> {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let mut gx = Vec::with_capacity(grad.len());
        for (g, p) in grad.chunks(self.classes).zip(self.probs.chunks(self.classes)) {
            let dot: F = g.iter().zip(p).map(|(&a, &b)| a * b).sum();
            gx.extend(g.iter().zip(p).map(|(&gi, &pi)| pi * (gi - dot)));
        }
        vec![Some(gx)]
    }
}
