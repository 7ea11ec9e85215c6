use crate::error::{Result, TensorError};
use crate::tensor::GradFn;
use crate::{Real, Tensor};

use super::dims4;

/// Convolution border handling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Padding {
    /// Zero padding so the output keeps the input's spatial extent. For even
    /// kernel sizes the extra row/column of padding goes after the data.
    Same,
    /// No padding; the output shrinks by `kernel - 1` along each axis.
    Valid,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl Geometry {
    /// Output columns `xo` for which `xo + j - pad_left` is a valid input column.
    fn col_range(&self, j: usize) -> (usize, usize) {
        let lo = self.pad_left.saturating_sub(j);
        let hi = (self.w + self.pad_left).saturating_sub(j).min(self.ow);
        (lo, hi)
    }

    fn input_row(&self, y: usize, i: usize) -> Option<usize> {
        let iy = (y + i).checked_sub(self.pad_top)?;
        (iy < self.h).then_some(iy)
    }
}

/// 2-D cross-correlation (no kernel flip) with a per-output-channel bias.
///
/// `input` is `[N, C, H, W]`, `weight` is `[K, C, kh, kw]`, `bias` is `[K]`.
pub fn conv2d<F: Real>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: &Tensor<F>,
    padding: Padding,
) -> Result<Tensor<F>> {
    let (n, c, h, w) = dims4(input, "conv2d")?;
    let (k, wc, kh, kw) = dims4(weight, "conv2d")?;
    if wc != c {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            expected: vec![k, c, kh, kw],
            found: weight.shape().to_vec(),
        });
    }
    if bias.shape() != [k] {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d bias",
            expected: vec![k],
            found: bias.shape().to_vec(),
        });
    }
    if kh == 0 || kw == 0 {
        return Err(TensorError::invalid("conv2d", "empty kernel"));
    }
    let geo = match padding {
        Padding::Same => Geometry {
            n, c, h, w, k, kh, kw,
            oh: h,
            ow: w,
            pad_top: (kh - 1) / 2,
            pad_left: (kw - 1) / 2,
        },
        Padding::Valid => {
            if kh > h || kw > w {
                return Err(TensorError::invalid(
                    "conv2d",
                    format!("kernel {kh}x{kw} larger than input {h}x{w} under valid padding"),
                ));
            }
            Geometry {
                n, c, h, w, k, kh, kw,
                oh: h - kh + 1,
                ow: w - kw + 1,
                pad_top: 0,
                pad_left: 0,
            }
        }
    };

    let x = input.data();
    let wt = weight.data();
    let b = bias.data();
    let plane_in = h * w;
    let plane_out = geo.oh * geo.ow;
    let mut out = vec![F::zero(); n * k * plane_out];
    for bi in 0..n {
        for ko in 0..k {
            let o = &mut out[(bi * k + ko) * plane_out..][..plane_out];
            o.iter_mut().for_each(|v| *v = b[ko]);
            for ci in 0..c {
                let xin = &x[(bi * c + ci) * plane_in..][..plane_in];
                let kern = &wt[(ko * c + ci) * kh * kw..][..kh * kw];
                for i in 0..kh {
                    for j in 0..kw {
                        let wv = kern[i * kw + j];
                        let (lo, hi) = geo.col_range(j);
                        if lo >= hi {
                            continue;
                        }
                        for y in 0..geo.oh {
                            let Some(iy) = geo.input_row(y, i) else { continue };
                            let orow = &mut o[y * geo.ow..][..geo.ow];
                            let irow = &xin[iy * w..][..w];
                            let shift = j as isize - geo.pad_left as isize;
                            for xo in lo..hi {
                                orow[xo] = orow[xo] + wv * irow[(xo as isize + shift) as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    drop((x, wt, b));
    Ok(Tensor::from_op(
        vec![n, k, geo.oh, geo.ow],
        out,
        vec![input.clone(), weight.clone(), bias.clone()],
        Box::new(ConvBackward { geo }),
    ))
}

struct ConvBackward {
    geo: Geometry,
}

impl<F: Real> GradFn<F> for ConvBackward {
    fn backward(&self, grad: &[F], parents: &[Tensor<F>]) -> Vec<Option<Vec<F>>> {
        let g = self.geo;
        let x = parents[0].data();
        let wt = parents[1].data();
        let plane_in = g.h * g.w;
        let plane_out = g.oh * g.ow;
        let want_x = parents[0].requires_grad();
        let want_w = parents[1].requires_grad();
        let mut gx = if want_x { vec![F::zero(); x.len()] } else { Vec::new() };
        // parameter gradients reduce over every output position; accumulate
        // them in f64 so single precision keeps its accuracy on wide inputs
        let mut gw = vec![0.0f64; wt.len()];
        let mut gb = vec![0.0f64; g.k];

        for bi in 0..g.n {
            for ko in 0..g.k {
                let go = &grad[(bi * g.k + ko) * plane_out..][..plane_out];
                gb[ko] += go.iter().map(|&v| Real::to_f64(v)).sum::<f64>();
                for ci in 0..g.c {
                    let xin = &x[(bi * g.c + ci) * plane_in..][..plane_in];
                    let kbase = (ko * g.c + ci) * g.kh * g.kw;
                    for i in 0..g.kh {
                        for j in 0..g.kw {
                            let (lo, hi) = g.col_range(j);
                            if lo >= hi {
                                continue;
                            }
                            let shift = j as isize - g.pad_left as isize;
                            let wv = wt[kbase + i * g.kw + j];
                            let mut acc = 0.0f64;
                            for y in 0..g.oh {
                                let Some(iy) = g.input_row(y, i) else { continue };
                                let grow = &go[y * g.ow..][..g.ow];
                                let irow = &xin[iy * g.w..][..g.w];
                                if want_w {
                                    for xo in lo..hi {
                                        acc += Real::to_f64(grow[xo] * irow[(xo as isize + shift) as usize]);
                                    }
                                }
                                if want_x {
                                    let gxrow = &mut gx[(bi * g.c + ci) * plane_in + iy * g.w..][..g.w];
                                    for (xo, &gv) in grow.iter().enumerate().take(hi).skip(lo) {
                                        let ix = (xo as isize + shift) as usize;
                                        gxrow[ix] = gxrow[ix] + wv * gv;
                                    }
                                }
                            }
                            gw[kbase + i * g.kw + j] += acc;
                        }
                    }
                }
            }
        }
        vec![
            want_x.then_some(gx),
            want_w.then(|| gw.into_iter().map(F::from_f64).collect()),
            parents[2].requires_grad().then(|| gb.into_iter().map(F::from_f64).collect()),
        ]
    }
}
