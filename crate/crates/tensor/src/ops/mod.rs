//! Differentiable layer primitives on `[N, C, H, W]` activations.

mod activation;
mod conv;
mod dropout;
mod loss;
mod norm;
mod pool;

pub use activation::{global_avg_pool, relu, softmax};
pub use conv::{conv2d, Padding};
pub use dropout::dropout;
pub use loss::{cross_entropy, PROB_FLOOR};
pub use norm::{batch_norm, batch_norm_inference, BatchNorm};
pub use pool::{pool2d, PoolMode};

use crate::error::{Result, TensorError};
use crate::{Real, Tensor};

pub(crate) fn dims4<F: Real>(t: &Tensor<F>, op: &'static str) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(TensorError::invalid(
            op,
            format!("expected a 4-D tensor, found shape {:?}", t.shape()),
        )),
    }
}
