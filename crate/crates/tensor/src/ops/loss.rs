use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Real, Tensor};

/// Probabilities are clamped to at least this value before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of `targets` under the row distributions of
/// `probs` (`[N, C]`, rows already softmax-normalized).
pub fn cross_entropy<F: Real>(probs: &Tensor<F>, targets: &[usize]) -> Result<Tensor<F>> {
    let &[n, c] = probs.shape() else {
        return Err(TensorError::invalid(
            "cross_entropy",
            format!("expected [N, C], found {:?}", probs.shape()),
        ));
    };
    if targets.len() != n {
        return Err(TensorError::ShapeMismatch {
            op: "cross_entropy targets",
            expected: vec![n],
            found: vec![targets.len()],
        });
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= c) {
        return Err(TensorError::invalid(
            "cross_entropy",
            format!("class index {t} out of range for {c} classes"),
        ));
    }
    let floor = F::from_f64(PROB_FLOOR);
    let p = probs.data();
    let total: F = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let q = p[i * c + t];
            // NaN must reach the caller's divergence check
            -(if q < floor { floor } else { q }).ln()
        })
        .sum();
    let loss = total / F::from_usize(n);
    drop(p);
    Ok(Tensor::from_op(
        vec![1],
        vec![loss],
        vec![probs.clone()],
        Box::new(CrossEntropyBackward { targets: targets.to_vec(), classes: c }),
    ))
}

struct CrossEntropyBackward {
    targets: Vec<usize>,
    classes: usize,
}
impl<F: Real> GradFn<F> for CrossEntropyBackward {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let p = parents[0].data();
        let n = F::from_usize(self.targets.len());
        let floor = F::from_f64(PROB_FLOOR);
        let mut g = vec![F::zero(); p.len()];
        for (i, &t) in self.targets.iter().enumerate() {
            let idx = i * self.classes + t;
            if p[idx] >= floor {
                g[idx] = -grad[0] / (n * p[idx]);
            }
        }
        vec![Some(g)]
    }
}
