//! Seeded weight initializers.

use rand::Rng;

use crate::Real;

/// Glorot/Xavier uniform initialization for a `[K, C, kh, kw]` kernel, with
/// fan-in `C*kh*kw` and fan-out `K*kh*kw`.
pub fn glorot_uniform<F: Real, R: Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Vec<F> {
    let [k, c, kh, kw] = shape;
    let receptive = kh * kw;
    let limit = (6.0 / ((c * receptive + k * receptive) as f64)).sqrt();
    (0..k * c * receptive)
        .map(|_| F::from_f64(rng.gen_range(-limit..limit)))
        .collect()
}
