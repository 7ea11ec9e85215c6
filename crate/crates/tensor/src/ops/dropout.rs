use rand::Rng;

use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Mode, Real, Tensor};

/// Inverted dropout: in training, each entry is zeroed with probability `p`
/// and survivors are scaled by `1 / (1 - p)`. Evaluation is the identity.
pub fn dropout<F: Real, R: Rng + ?Sized>(input: &Tensor<F>, p: f64, mode: Mode, rng: &mut R) -> Result<Tensor<F>> {
    if !(0.0..1.0).contains(&p) {
        return Err(TensorError::invalid("dropout", format!("probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return input.reshape(input.shape().to_vec());
    }
    let keep = F::from_f64(1.0 / (1.0 - p));
    let mask: Vec<F> = (0..input.numel())
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect();
    let out = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(Tensor::from_op(input.shape().to_vec(), out, vec![input.clone()], Box::new(DropoutBackward { mask })))
}

struct DropoutBackward<F> {
    mask: Vec<F>,
}
impl<F: Real> GradFn<F> for DropoutBackward<F> {
    fn backward(&self, grad: &[F], _: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        vec![Some(grad.iter().zip(&self.mask).map(|(&g, &m)| g * m).collect())]
    }
}
