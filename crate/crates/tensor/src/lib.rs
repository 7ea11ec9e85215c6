//! A deliberately small n-dimensional array with reverse-mode automatic
//! differentiation.
//!
//! Only the operations needed by the tempo/key networks are provided:
//! 2-D convolution, max/average pooling, batch normalization, dropout,
//! ReLU, global average pooling, softmax and cross-entropy. Tensors are
//! generic over [`Real`] so the same graph can be built in `f32` for
//! training and in `f64` for finite-difference gradient checks.
//!
//! ```
//! use tempokey_tensor::Tensor;
//!
//! let x = Tensor::<f64>::param(vec![3], vec![3.0, -1.0, 2.0]).unwrap();
//! let loss = x.mul(&x).unwrap().sum();
//! loss.backward().unwrap();
//! assert_eq!(x.grad().unwrap(), vec![6.0, -2.0, 4.0]);
//! ```

mod adam;
mod error;
pub mod gradcheck;
pub mod init;
pub mod ops;
mod real;
mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use error::{Result, TensorError};
pub use ops::{
    batch_norm, batch_norm_inference, conv2d, cross_entropy, dropout, global_avg_pool, pool2d, relu, softmax,
    BatchNorm, Padding, PoolMode,
};
pub use real::Real;
pub use tensor::Tensor;

/// Whether layers behave as during training (batch statistics, active
/// dropout) or as during inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
