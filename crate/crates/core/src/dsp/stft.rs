use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{AudioBuffer, Spectrogram, SpectrogramKind};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f32> {
    (0..n)
        .map(|i| (0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()) as f32)
        .collect()
}

/// Hann-windowed short-time Fourier magnitudes, `window_size/2 + 1` bins by
/// `floor((len - window_size)/hop_size) + 1` frames. Frames start at sample 0
/// with no padding.
pub fn stft_magnitude(audio: &AudioBuffer, window_size: usize, hop_size: usize) -> Result<Spectrogram> {
    if window_size < 2 || hop_size == 0 {
        return Err(Error::Spec(format!("window {window_size} / hop {hop_size} invalid")));
    }
    if audio.len() < window_size {
        return Err(Error::Audio(format!(
            "{} samples is shorter than one {window_size}-sample window",
            audio.len()
        )));
    }
    let n_frames = (audio.len() - window_size) / hop_size + 1;
    let n_bins = window_size / 2 + 1;
    let window = hann(window_size);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(window_size);
    let mut buf = vec![Complex::new(0.0f32, 0.0); window_size];
    let mut scratch = vec![Complex::new(0.0f32, 0.0); fft.get_inplace_scratch_len()];
    let mut grid = Grid::zeros(n_bins, n_frames);
    for t in 0..n_frames {
        let frame = &audio.samples[t * hop_size..t * hop_size + window_size];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&window) {
            *b = Complex::new(s * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (f, c) in buf[..n_bins].iter().enumerate() {
            grid.set(f, t, c.norm());
        }
    }
    Ok(Spectrogram {
        values: grid,
        kind: SpectrogramKind::Linear,
        frame_duration: hop_size as f64 / audio.sample_rate as f64,
        sample_rate: audio.sample_rate,
    })
}
