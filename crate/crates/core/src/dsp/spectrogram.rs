use super::filterbank::{logfreq_filterbank, mel_filterbank};
use super::stft::stft_magnitude;
use super::{AudioBuffer, Spectrogram, SpectrogramKind, SpectrogramSpec, C1_HZ, LOGFREQ_BINS_PER_OCTAVE};
use crate::error::Result;

/// Centre frequency of log-frequency bin `b`: `C1 * 2^(b/24)`.
pub fn logfreq_bin_frequency(b: usize) -> f64 {
    C1_HZ * 2f64.powf(b as f64 / LOGFREQ_BINS_PER_OCTAVE as f64)
}

/// Computes the spectrogram described by `spec`, resampling the audio to
/// `spec.sample_rate` first if needed.
pub fn spectrogram(audio: &AudioBuffer, spec: &SpectrogramSpec) -> Result<Spectrogram> {
    spec.validate()?;
    let resampled;
    let audio = if audio.sample_rate == spec.sample_rate {
        audio
    } else {
        resampled = audio.resampled(spec.sample_rate)?;
        &resampled
    };
    let linear = stft_magnitude(audio, spec.window_size, spec.hop_size)?;
    let values = match spec.kind {
        SpectrogramKind::Linear => return Ok(linear),
        SpectrogramKind::Mel => {
            mel_filterbank(spec.n_bins, spec.fmin, spec.fmax, spec.window_size, spec.sample_rate).apply(&linear.values)
        }
        SpectrogramKind::LogFreq => {
            let ratio = 2f64.powf(1.0 / LOGFREQ_BINS_PER_OCTAVE as f64);
            let centers: Vec<f64> = (0..spec.n_bins).map(|b| spec.fmin * ratio.powi(b as i32)).collect();
            logfreq_filterbank(&centers, spec.window_size, spec.sample_rate).apply(&linear.values)
        }
    };
    Ok(Spectrogram {
        values,
        kind: spec.kind,
        frame_duration: linear.frame_duration,
        sample_rate: spec.sample_rate,
    })
}

/// 40-band mel spectrogram of the tempo pipeline.
pub fn mel_spectrogram(audio: &AudioBuffer) -> Result<Spectrogram> {
    spectrogram(audio, &SpectrogramSpec::tempo())
}

/// 192-bin log-frequency spectrogram of the key pipeline.
pub fn logfreq_spectrogram(audio: &AudioBuffer) -> Result<Spectrogram> {
    spectrogram(audio, &SpectrogramSpec::key())
}

/// Zero mean, unit (population) variance; the divisor is `std + eps`, so
/// a constant input maps to zeros.
pub fn normalize_sample(values: &[f32], eps: f32) -> Vec<f32> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + eps as f64;
    values.iter().map(|&v| ((v as f64 - mean) / denom) as f32).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_standardization() {
        let out = normalize_sample(&[0.0, 2.0], 1e-8);
        assert!((out[0] + 1.0).abs() < 1e-5 && (out[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn constant_input_maps_to_zero() {
        assert!(normalize_sample(&[5.0; 9], 1e-8).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn a4_lands_on_bin_90() {
        assert!((logfreq_bin_frequency(90) - 440.0).abs() < 0.05);
    }
}
