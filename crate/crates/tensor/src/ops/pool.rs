use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Real, Tensor};

use super::dims4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Non-overlapping pooling (stride equals window) over the two spatial axes.
///
/// Trailing rows/columns that do not fill a whole window are dropped. When an
/// axis has extent 1 its window is forced to 1, so a 2x2 pool over a
/// `1 x W` activation pools only along the width.
pub fn pool2d<F: Real>(input: &Tensor<F>, window: (usize, usize), mode: PoolMode) -> Result<Tensor<F>> {
    let (n, c, h, w) = dims4(input, "pool2d")?;
    if window.0 == 0 || window.1 == 0 {
        return Err(TensorError::invalid("pool2d", "window must be at least 1x1"));
    }
    let ph = if h == 1 { 1 } else { window.0 };
    let pw = if w == 1 { 1 } else { window.1 };
    let (oh, ow) = (h / ph, w / pw);
    if oh == 0 || ow == 0 {
        return Err(TensorError::invalid(
            "pool2d",
            format!("window {ph}x{pw} does not fit input {h}x{w}"),
        ));
    }
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::new();
    let inv = F::one() / F::from_usize(ph * pw);
    for plane in 0..n * c {
        let xin = &x[plane * h * w..][..h * w];
        for y in 0..oh {
            for xo in 0..ow {
                match mode {
                    PoolMode::Max => {
                        let mut best = y * ph * w + xo * pw;
                        for i in 0..ph {
                            for j in 0..pw {
                                let idx = (y * ph + i) * w + xo * pw + j;
                                if xin[idx] > xin[best] {
                                    best = idx;
                                }
                            }
                        }
                        out.push(xin[best]);
                        argmax.push(plane * h * w + best);
                    }
                    PoolMode::Avg => {
                        let mut s = F::zero();
                        for i in 0..ph {
                            for j in 0..pw {
                                s = s + xin[(y * ph + i) * w + xo * pw + j];
                            }
                        }
                        out.push(s * inv);
                    }
                }
            }
        }
    }
    drop(x);
    let geo = PoolBackward { mode, h, w, ph, pw, oh, ow, argmax };
    Ok(Tensor::from_op(vec![n, c, oh, ow], out, vec![input.clone()], Box::new(geo)))
}

struct PoolBackward {
    mode: PoolMode,
    h: usize,
    w: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
    argmax: Vec<usize>,
}

impl<F: Real> GradFn<F> for PoolBackward {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let mut gx = vec![F::zero(); parents[0].numel()];
        match self.mode {
            PoolMode::Max => {
                for (&idx, &g) in self.argmax.iter().zip(grad) {
                    gx[idx] = gx[idx] + g;
                }
            }
            PoolMode::Avg => {
                let inv = F::one() / F::from_usize(self.ph * self.pw);
                let planes = grad.len() / (self.oh * self.ow);
                for plane in 0..planes {
                    let base = plane * self.h * self.w;
                    for y in 0..self.oh {
                        for xo in 0..self.ow {
                            let g = grad[(plane * self.oh + y) * self.ow + xo] * inv;
                            for i in 0..self.ph {
                                for j in 0..self.pw {
                                    let idx = base + (y * self.ph + i) * self.w + xo * self.pw + j;
                                    gx[idx] = gx[idx] + g;
                                }
                            }
                        }
                    }
                }
            }
        }
        vec![Some(gx)]
    }
}
