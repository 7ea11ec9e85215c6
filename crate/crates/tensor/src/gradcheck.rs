//! Central finite-difference gradient checking.
//!
//! The checker only evaluates the loss closure; it never looks at the
//! backward rules, so it serves as an independent oracle for them.
//!
//! A probe is redrawn when its forward and backward one-sided differences
//! disagree by more than [`Settings::kink`], which happens when the
//! differencing interval straddles a non-differentiable point.

use rand::Rng;

use crate::error::Result;
use crate::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub probes: Vec<Probe>,
    /// Draws rejected because a kink (ReLU, max-pool switch) lay inside the
    /// differencing interval.
    pub skipped_kinks: usize,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.probes.iter().map(|p| p.rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&Probe> {
        self.probes
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// Usable probes to collect.
    pub probes: usize,
    /// The step for entry `w` is `step * max(1, |w|)`.
    pub step: f64,
    /// Lower bound of the relative-error denominator.
    pub floor: f64,
    /// Largest relative disagreement of the two one-sided differences for
    /// a probe to count. A kink inside the interval moves the central
    /// difference by up to half that disagreement, so twice the error limit
    /// keeps kinks from masquerading as gradient errors.
    pub kink: f64,
}

fn is_kink(center: f64, plus: f64, minus: f64, step_plus: f64, step_minus: f64, s: &Settings) -> bool {
    let fwd = (plus - center) / step_plus;
    let bwd = (center - minus) / step_minus;
    (fwd - bwd).abs() > s.kink * fwd.abs().max(bwd.abs()).max(s.floor)
}

fn pick<F: Real, R: Rng + ?Sized>(params: &[Tensor<F>], rng: &mut R) -> (usize, usize) {
    let total: usize = params.iter().map(|p| p.numel()).sum();
    let mut flat = rng.gen_range(0..total);
    let mut param = 0;
    while flat >= params[param].numel() {
        flat -= params[param].numel();
        param += 1;
    }
    (param, flat)
}

/// Central difference of `value` with respect to one parameter entry.
/// Returns `None` when the interval straddles a kink.
fn central_difference<F: Real>(
    p: &Tensor<F>,
    flat: usize,
    settings: &Settings,
    value: &mut dyn FnMut() -> Result<f64>,
) -> Result<Option<f64>> {
    let original = p.data()[flat];
    let w = Real::to_f64(original);
    let h = settings.step * w.abs().max(1.0);
    let center = value()?;
    p.update_data(|d| d[flat] = F::from_f64(w + h));
    let plus_at = Real::to_f64(p.data()[flat]);
    let plus = value();
    p.update_data(|d| d[flat] = F::from_f64(w - h));
    let minus_at = Real::to_f64(p.data()[flat]);
    let minus = value();
    p.update_data(|d| d[flat] = original);
    let (plus, minus) = (plus?, minus?);
    if is_kink(center, plus, minus, plus_at - w, w - minus_at, settings) {
        return Ok(None);
    }
    // perturbed values are rounded to F, so divide by the step actually taken
    Ok(Some((plus - minus) / (plus_at - minus_at)))
}

fn run_probes<F: Real, R: Rng + ?Sized>(
    params: &[Tensor<F>],
    analytic: &[Vec<f64>],
    settings: &Settings,
    rng: &mut R,
    value: &mut dyn FnMut() -> Result<f64>,
) -> Result<GradCheckReport> {
    let probes = settings.probes;
    let mut out = Vec::with_capacity(probes);
    let mut skipped = 0;
    while out.len() < probes && skipped < 20 * probes.max(1) {
        let (param, index) = pick(params, rng);
        let Some(numeric) = central_difference(&params[param], index, settings, value)? else {
            skipped += 1;
            continue;
        };
        let a = analytic[param][index];
        out.push(Probe {
            param,
            index,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric, settings.floor),
        });
    }
    params.iter().for_each(|p| p.zero_grad());
    Ok(GradCheckReport { probes: out, skipped_kinks: skipped })
}

fn analytic_grads<F: Real>(params: &[Tensor<F>]) -> Vec<Vec<f64>> {
    params
        .iter()
        .map(|p| match p.grad() {
            Some(g) => g.iter().map(|&v| Real::to_f64(v)).collect(),
            None => vec![0.0; p.numel()],
        })
        .collect()
}

/// Fixed random weights for the probe `sum(out * r)`, representable in `F`.
fn probe_weights<F: Real, R: Rng + ?Sized>(shape: Vec<usize>, rng: &mut R) -> Result<(Tensor<F>, Vec<f64>)> {
    let n: usize = shape.iter().product();
    let r: Vec<F> = (0..n).map(|_| F::from_f64(rng.gen_range(-1.0..1.0))).collect();
    let exact = r.iter().map(|&v| Real::to_f64(v)).collect();
    Ok((Tensor::new(shape, r)?, exact))
}

fn probe_value<F: Real>(out: &Tensor<F>, r: &[f64]) -> f64 {
    out.data().iter().zip(r).map(|(&o, w)| Real::to_f64(o) * w).sum()
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps entries whose true
/// gradient is zero from dominating the report.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backpropagated gradients of `loss_fn` against central
/// differences at `settings.probes` randomly chosen parameter entries.
///
/// `loss_fn` must be a deterministic function of the parameter values (fix
/// any dropout seed inside it).
pub fn check<F: Real, R: Rng + ?Sized>(
    params: &[Tensor<F>],
    mut loss_fn: impl FnMut() -> Result<Tensor<F>>,
    settings: &Settings,
    rng: &mut R,
) -> Result<GradCheckReport> {
    params.iter().for_each(|p| p.zero_grad());
    loss_fn()?.backward()?;
    let analytic = analytic_grads(params);
    let mut value = || -> Result<f64> { Ok(Real::to_f64(loss_fn()?.item())) };
    run_probes(params, &analytic, settings, rng, &mut value)
}

/// Gradient check of a tensor-valued `forward` through the scalar probe
/// `sum(out * r)` with a fixed random `r`.
///
/// The probe is backpropagated in the working precision, while the finite
/// differences reduce the forward outputs in `f64`. For single precision
/// this keeps summation rounding out of the numeric derivative.
pub fn check_probe<F: Real, R: Rng + ?Sized>(
    params: &[Tensor<F>],
    mut forward: impl FnMut() -> Result<Tensor<F>>,
    settings: &Settings,
    rng: &mut R,
) -> Result<GradCheckReport> {
    let shape = forward()?.shape().to_vec();
    let (r, r_exact) = probe_weights::<F, R>(shape, rng)?;
    params.iter().for_each(|p| p.zero_grad());
    forward()?.mul(&r)?.sum().backward()?;
    let analytic = analytic_grads(params);
    let mut value = || -> Result<f64> { Ok(probe_value(&forward()?, &r_exact)) };
    run_probes(params, &analytic, settings, rng, &mut value)
}

/// Like [`check_probe`], but the finite differences are taken on `twin`, a
/// copy of the same function in another precision with the same parameter
/// layout and values.
///
/// Used to check single-precision backpropagation through deep graphs,
/// where single-precision differences are dominated by rounding at any step
/// small enough to avoid crossing ReLU and max-pool kinks.
pub fn check_probe_twin<F: Real, G: Real, R: Rng + ?Sized>(
    params: &[Tensor<F>],
    mut forward: impl FnMut() -> Result<Tensor<F>>,
    twin_params: &[Tensor<G>],
    mut twin_forward: impl FnMut() -> Result<Tensor<G>>,
    settings: &Settings,
    rng: &mut R,
) -> Result<GradCheckReport> {
    if params.len() != twin_params.len() || params.iter().zip(twin_params).any(|(a, b)| a.numel() != b.numel()) {
        return Err(crate::TensorError::invalid("gradcheck", "twin parameters have a different layout"));
    }
    let shape = forward()?.shape().to_vec();
    let (r, r_exact) = probe_weights::<F, R>(shape, rng)?;
    params.iter().for_each(|p| p.zero_grad());
    forward()?.mul(&r)?.sum().backward()?;
    let analytic = analytic_grads(params);
    params.iter().for_each(|p| p.zero_grad());
    let mut value = || -> Result<f64> { Ok(probe_value(&twin_forward()?, &r_exact)) };
    run_probes(twin_params, &analytic, settings, rng, &mut value)
}
