//! The shallow (directional) and deep (directional or square) networks,
//! built as flat layer lists over the autodiff tensor.

mod config;
mod io;

pub use config::{Arch, ArchConfig, Direction, Family, ModelConfig, TaskConfig};
pub use io::{decode_weights, encode_weights, load_weights, load_weights_matching, save_weights, WEIGHTS_MAGIC};

use rand::Rng;
use tempokey_tensor::init::glorot_uniform;
use tempokey_tensor::{
    batch_norm, batch_norm_inference, conv2d, dropout, global_avg_pool, pool2d, relu, softmax, BatchNorm, Mode,
    Padding, PoolMode, Real, Tensor,
};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Filter-count exponents of the six deep modules: `f = 2^l * k`.
pub const DEEP_LEVELS: [u32; 6] = [0, 1, 2, 2, 3, 3];
/// Long filters of the shallow network: `SHALLOW_LONG_FACTOR * k` of them.
pub const SHALLOW_LONG_FACTOR: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Frequency,
    Time,
}

pub enum Layer<F: Real> {
    Conv {
        weight: Tensor<F>,
        bias: Tensor<F>,
        padding: Padding,
    },
    Relu,
    BatchNorm(BatchNorm<F>),
    /// 2-D max pooling; an axis of extent 1 is not pooled.
    MaxPool((usize, usize)),
    /// Average over the whole current extent of one axis.
    AxisAvgPool(Axis),
    Dropout(f64),
    GlobalAvgPool,
    Softmax,
}

impl<F: Real> Layer<F> {
    pub fn name(&self) -> String {
        match self {
            Layer::Conv { weight, padding, .. } => {
                let s = weight.shape();
                format!("conv {}x{}x{} {padding:?}", s[0], s[2], s[3])
            }
            Layer::Relu => "relu".into(),
            Layer::BatchNorm(bn) => format!("batchnorm {}", bn.channels()),
            Layer::MaxPool((h, w)) => format!("maxpool {h}x{w}"),
            Layer::AxisAvgPool(axis) => format!("avgpool {axis:?}"),
            Layer::Dropout(p) => format!("dropout {p}"),
            Layer::GlobalAvgPool => "global avgpool".into(),
            Layer::Softmax => "softmax".into(),
        }
    }

    fn eval(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(match self {
            Layer::Conv { weight, bias, padding } => conv2d(x, weight, bias, *padding)?,
            Layer::Relu => relu(x),
            Layer::BatchNorm(bn) => batch_norm_inference(x, bn)?,
            Layer::MaxPool(window) => pool2d(x, *window, PoolMode::Max)?,
            Layer::AxisAvgPool(axis) => axis_avg_pool(x, *axis)?,
            Layer::Dropout(_) => x.clone(),
            Layer::GlobalAvgPool => global_avg_pool(x)?,
            Layer::Softmax => softmax(x)?,
        })
    }

    fn train<R: Rng + ?Sized>(&mut self, x: &Tensor<F>, rng: &mut R) -> Result<Tensor<F>> {
        match self {
            Layer::BatchNorm(bn) => Ok(batch_norm(x, bn, Mode::Train)?),
            Layer::Dropout(p) => Ok(dropout(x, *p, Mode::Train, rng)?),
            other => other.eval(x),
        }
    }
}

fn axis_avg_pool<F: Real>(x: &Tensor<F>, axis: Axis) -> Result<Tensor<F>> {
    let s = x.shape();
    if s.len() != 4 {
        return Err(Error::Shape(format!("axis pooling needs a 4-D input, got {s:?}")));
    }
    let window = match axis {
        Axis::Frequency => (s[2], 1),
        Axis::Time => (1, s[3]),
    };
    Ok(pool2d(x, window, PoolMode::Avg)?)
}

/// A built network with its parameters.
pub struct Model<F: Real = f32> {
    config: ModelConfig,
    layers: Vec<Layer<F>>,
}

fn conv<F: Real, R: Rng + ?Sized>(
    in_ch: usize,
    out_ch: usize,
    kernel: (usize, usize),
    padding: Padding,
    rng: &mut R,
) -> Layer<F> {
    let shape = [out_ch, in_ch, kernel.0, kernel.1];
    Layer::Conv {
        weight: Tensor::param(shape.to_vec(), glorot_uniform(shape, rng)).expect("shape matches data"),
        bias: Tensor::param(vec![out_ch], vec![F::zero(); out_ch]).expect("shape matches data"),
        padding,
    }
}

/// Initial bias of the classification convolution. The head applies ReLU
/// before the softmax, so a class whose logit goes negative for all inputs
/// stops receiving gradient; starting every logit in the active region keeps
/// classes from dying early in training.
pub const HEAD_BIAS_INIT: f64 = 1.0;

fn class_module<F: Real, R: Rng + ?Sized>(in_ch: usize, n_classes: usize, rng: &mut R) -> Vec<Layer<F>> {
    let mut head = conv(in_ch, n_classes, (1, 1), Padding::Valid, rng);
    if let Layer::Conv { bias, .. } = &mut head {
        bias.set_data(&vec![F::from_f64(HEAD_BIAS_INIT); n_classes]).expect("shape matches data");
    }
    vec![
        head,
        Layer::Relu,
        Layer::GlobalAvgPool,
        Layer::Softmax,
    ]
}

fn shallow_layers<F: Real, R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Vec<Layer<F>> {
    let (k, p) = (config.arch.k, config.arch.dropout);
    let direction = config.arch.arch.direction();
    let pool_axis = match direction {
        Direction::Temporal => Axis::Frequency,
        _ => Axis::Time,
    };
    let long = SHALLOW_LONG_FACTOR * k;
    let mut layers = vec![
        conv(1, k, direction.kernel(3), Padding::Same, rng),
        Layer::Relu,
        Layer::Dropout(p),
        Layer::AxisAvgPool(pool_axis),
        conv(k, long, direction.kernel(config.long_filter_len()), Padding::Valid, rng),
        Layer::Relu,
        Layer::Dropout(p),
    ];
    layers.extend(class_module(long, config.task.n_classes, rng));
    layers
}

fn deep_layers<F: Real, R: Rng + ?Sized>(config: &ModelConfig, rng: &mut R) -> Vec<Layer<F>> {
    let direction = config.arch.arch.direction();
    let mut layers = Vec::new();
    let mut in_ch = 1;
    for level in DEEP_LEVELS {
        let f = (1 << level) * config.arch.k;
        layers.push(conv(in_ch, f, direction.kernel(5), Padding::Same, rng));
        layers.push(Layer::Relu);
        layers.push(Layer::BatchNorm(BatchNorm::new(f)));
        layers.push(conv(f, f, direction.kernel(3), Padding::Same, rng));
        layers.push(Layer::Relu);
        layers.push(Layer::BatchNorm(BatchNorm::new(f)));
        layers.push(Layer::MaxPool((2, 2)));
        layers.push(Layer::Dropout(config.arch.dropout));
        in_ch = f;
    }
    layers.extend(class_module(in_ch, config.task.n_classes, rng));
    layers
}

impl<F: Real> Model<F> {
    /// Builds the network with Glorot-uniform kernels, zero biases and a
    /// positive classification-head bias.
    pub fn build<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = match config.arch.arch.family() {
            Family::Shallow => shallow_layers(&config, rng),
            Family::Deep => deep_layers(&config, rng),
        };
        Ok(Model { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    /// Trainable tensors: kernels, biases, batch-norm scales and shifts.
    pub fn parameters(&self) -> Vec<Tensor<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } => {
                    out.push(weight.clone());
                    out.push(bias.clone());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.clone());
                    out.push(bn.beta.clone());
                }
                _ => {}
            }
        }
        out
    }

    /// Kernels and biases plus four values per batch-norm channel (scale,
    /// shift, moving mean, moving variance).
    pub fn count_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|layer| match layer {
                Layer::Conv { weight, bias, .. } => weight.numel() + bias.numel(),
                Layer::BatchNorm(bn) => 4 * bn.channels(),
                _ => 0,
            })
            .sum()
    }

    /// Smallest accepted input width.
    pub fn min_frames(&self) -> usize {
        match self.config.arch.arch {
            Arch::ShallowTemp => self.config.long_filter_len(),
            _ => 1,
        }
    }

    pub fn check_input(&self, shape: &[usize]) -> Result<()> {
        let bins = self.config.task.input_bins;
        match shape {
            [n, 1, f, t] if *n > 0 && *f == bins && *t >= self.min_frames() => Ok(()),
            _ => Err(Error::Shape(format!(
                "{} expects [N, 1, {bins}, T >= {}], got {shape:?}",
                self.config.arch.arch,
                self.min_frames()
            ))),
        }
    }

    /// Forward pass; in training mode batch norm uses and updates batch
    /// statistics and dropout draws its masks from `rng`.
    pub fn forward<R: Rng + ?Sized>(&mut self, x: &Tensor<F>, mode: Mode, rng: &mut R) -> Result<Tensor<F>> {
        self.check_input(x.shape())?;
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = match mode {
                Mode::Train => layer.train(&h, rng)?,
                Mode::Eval => layer.eval(&h)?,
            };
        }
        Ok(h)
    }

    /// Evaluation-mode forward pass; leaves the model untouched.
    pub fn infer(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        self.check_input(x.shape())?;
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.eval(&h)?;
        }
        Ok(h)
    }

    /// Evaluation-mode activation shapes after every layer, input first.
    pub fn shape_trace(&self, x: &Tensor<F>) -> Result<Vec<(String, Vec<usize>)>> {
        self.check_input(x.shape())?;
        let mut trace = vec![("input".to_string(), x.shape().to_vec())];
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.eval(&h)?;
            trace.push((layer.name(), h.shape().to_vec()));
        }
        Ok(trace)
    }

    /// All stored values in file order: per conv its kernel and bias, per
    /// batch norm its scale, shift, moving mean and moving variance.
    pub fn blobs(&self) -> Vec<Vec<F>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } => {
                    out.push(weight.to_vec());
                    out.push(bias.to_vec());
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.to_vec());
                    out.push(bn.beta.to_vec());
                    out.push(bn.moving_mean.clone());
                    out.push(bn.moving_var.clone());
                }
                _ => {}
            }
        }
        out
    }

    pub fn set_blobs(&mut self, blobs: &[Vec<F>]) -> Result<()> {
        let expected: Vec<usize> = self.blobs().iter().map(Vec::len).collect();
        let found: Vec<usize> = blobs.iter().map(Vec::len).collect();
        if expected != found {
            return Err(Error::ConfigMismatch(format!(
                "parameter layout {found:?} does not match the architecture's {expected:?}"
            )));
        }
        let mut it = blobs.iter();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { weight, bias, .. } => {
                    weight.set_data(it.next().unwrap())?;
                    bias.set_data(it.next().unwrap())?;
                }
                Layer::BatchNorm(bn) => {
                    bn.gamma.set_data(it.next().unwrap())?;
                    bn.beta.set_data(it.next().unwrap())?;
                    bn.moving_mean.clone_from(it.next().unwrap());
                    bn.moving_var.clone_from(it.next().unwrap());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Stacks equally shaped grids into an `[N, 1, F, T]` tensor.
pub fn batch_tensor<F: Real>(grids: &[&Grid]) -> Result<Tensor<F>> {
    let first = grids.first().ok_or_else(|| Error::Empty("batch has no samples".into()))?;
    let (rows, cols) = first.shape();
    let mut data = Vec::with_capacity(grids.len() * rows * cols);
    for g in grids {
        if g.shape() != (rows, cols) {
            return Err(Error::Shape(format!("batch mixes {rows}x{cols} and {:?} grids", g.shape())));
        }
        data.extend(g.values().iter().map(|&v| F::from_f64(v as f64)));
    }
    Ok(Tensor::new(vec![grids.len(), 1, rows, cols], data)?)
}
