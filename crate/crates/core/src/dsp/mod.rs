//! Audio loading and the two spectrogram front ends: 40 mel bands for tempo
//! and 192 log-frequency bins (two per semitone from C1) for key.

mod audio;
mod cache;
mod filterbank;
mod spectrogram;
mod stft;

pub use audio::{load_audio, resample_linear, write_wav, AudioBuffer};
pub use cache::{decode_cache, encode_cache, read_cache, write_cache, CACHE_MAGIC, CACHE_VERSION};
pub use filterbank::{hz_to_mel, logfreq_filterbank, mel_filterbank, mel_to_hz, Filterbank};
pub use spectrogram::{logfreq_bin_frequency, logfreq_spectrogram, mel_spectrogram, normalize_sample, spectrogram};
pub use stft::stft_magnitude;

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Lowest log-frequency bin, C1 in Hz.
pub const C1_HZ: f64 = 32.703;
pub const LOGFREQ_BINS_PER_OCTAVE: usize = 24;
pub const NORMALIZE_EPS: f32 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpectrogramKind {
    /// Raw STFT magnitudes, `window/2 + 1` bins.
    Linear,
    Mel,
    LogFreq,
}

impl SpectrogramKind {
    pub fn code(self) -> u8 {
        match self {
            SpectrogramKind::Linear => 0,
            SpectrogramKind::Mel => 1,
            SpectrogramKind::LogFreq => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SpectrogramKind::Linear),
            1 => Some(SpectrogramKind::Mel),
            2 => Some(SpectrogramKind::LogFreq),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrogramSpec {
    pub kind: SpectrogramKind,
    pub n_bins: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub window_size: usize,
    pub hop_size: usize,
    pub sample_rate: u32,
}

impl SpectrogramSpec {
    /// 40 mel bands over 20-5000 Hz at 11025 Hz, window 1024, hop 512.
    pub fn tempo() -> Self {
        SpectrogramSpec {
            kind: SpectrogramKind::Mel,
            n_bins: 40,
            fmin: 20.0,
            fmax: 5000.0,
            window_size: 1024,
            hop_size: 512,
            sample_rate: 11025,
        }
    }

    /// 192 log-frequency bins from C1 at 22050 Hz, window 8192, hop 4096.
    pub fn key() -> Self {
        let n_bins = 8 * LOGFREQ_BINS_PER_OCTAVE;
        SpectrogramSpec {
            kind: SpectrogramKind::LogFreq,
            n_bins,
            fmin: C1_HZ,
            fmax: logfreq_bin_frequency(n_bins - 1),
            window_size: 8192,
            hop_size: 4096,
            sample_rate: 22050,
        }
    }

    pub fn frame_duration(&self) -> f64 {
        self.hop_size as f64 / self.sample_rate as f64
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::Spec("sample rate must be positive".into()));
        }
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return Err(Error::Spec(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got {}..{}",
                self.fmin, self.fmax
            )));
        }
        if self.hop_size == 0 || self.hop_size > self.window_size {
            return Err(Error::Spec(format!(
                "hop {} must be in 1..={}",
                self.hop_size, self.window_size
            )));
        }
        if self.n_bins == 0 {
            return Err(Error::Spec("n_bins must be positive".into()));
        }
        if self.kind == SpectrogramKind::LogFreq && !self.n_bins.is_multiple_of(LOGFREQ_BINS_PER_OCTAVE) {
            return Err(Error::Spec(format!(
                "log-frequency bin count {} is not a multiple of {LOGFREQ_BINS_PER_OCTAVE}",
                self.n_bins
            )));
        }
        Ok(())
    }
}

/// Magnitude grid (bins x frames) with its time resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub values: Grid,
    pub kind: SpectrogramKind,
    pub frame_duration: f64,
    pub sample_rate: u32,
}

impl Spectrogram {
    pub fn n_bins(&self) -> usize {
        self.values.rows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.cols()
    }
}
