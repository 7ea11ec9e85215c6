use crate::grid::Grid;

/// Sparse filterbank mapping STFT bins to output bands. Each band keeps the
/// first STFT bin it touches and a run of weights from there.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    n_fft_bins: usize,
    bands: Vec<(usize, Vec<f32>)>,
}

impl Filterbank {
    fn from_dense(n_fft_bins: usize, dense: Vec<Vec<f32>>) -> Self {
        let bands = dense
            .into_iter()
            .map(|row| {
                let first = row.iter().position(|&w| w > 0.0).unwrap_or(0);
                let last = row.iter().rposition(|&w| w > 0.0).map_or(first, |i| i + 1);
                (first, row[first..last].to_vec())
            })
            .collect();
        Filterbank { n_fft_bins, bands }
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn n_fft_bins(&self) -> usize {
        self.n_fft_bins
    }

    /// Weight of STFT bin `bin` in band `band`.
    pub fn weight(&self, band: usize, bin: usize) -> f32 {
        let (start, w) = &self.bands[band];
        if bin < *start {
            return 0.0;
        }
        w.get(bin - start).copied().unwrap_or(0.0)
    }

    /// Applies the bank to a linear-magnitude grid (`n_fft_bins` rows).
    pub fn apply(&self, linear: &Grid) -> Grid {
        assert_eq!(linear.rows(), self.n_fft_bins, "filterbank / STFT bin count mismatch");
        let cols = linear.cols();
        let mut out = Grid::zeros(self.bands.len(), cols);
        for (b, (start, weights)) in self.bands.iter().enumerate() {
            let dst = out.row_mut(b);
            for (i, &w) in weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (d, &v) in dst.iter_mut().zip(linear.row(start + i)) {
                    *d += w * v;
                }
            }
        }
        out
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn triangle(f: f64, lo: f64, center: f64, hi: f64) -> f32 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= center {
        ((f - lo) / (center - lo)) as f32
    } else {
        ((hi - f) / (hi - center)) as f32
    }
}

/// `n_bands` triangular filters with peak 1, centres equally spaced on the
/// mel scale; band edges are the neighbouring centres, the outermost edges
/// are `fmin` and `fmax`.
pub fn mel_filterbank(n_bands: usize, fmin: f64, fmax: f64, window_size: usize, sample_rate: u32) -> Filterbank {
    let n_fft_bins = window_size / 2 + 1;
    let bin_hz = sample_rate as f64 / window_size as f64;
    let (lo, hi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let points: Vec<f64> = (0..n_bands + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_bands + 1) as f64))
        .collect();
    let dense = (0..n_bands)
        .map(|b| {
            (0..n_fft_bins)
                .map(|k| triangle(k as f64 * bin_hz, points[b], points[b + 1], points[b + 2]))
                .collect()
        })
        .collect();
    Filterbank::from_dense(n_fft_bins, dense)
}

/// Magnitude response of a long Hann window to a sinusoid `offset` bins
/// away, relative to the on-bin response.
fn hann_response(offset: f64) -> f64 {
    let d = offset.abs();
    if d < 1e-9 {
        return 1.0;
    }
    if (d - 1.0).abs() < 1e-9 {
        return 0.5;
    }
    let sinc = (std::f64::consts::PI * d).sin() / (std::f64::consts::PI * d);
    (sinc / (1.0 - d * d)).abs()
}

/// Triangular filters centred on `centers` (Hz, ascending); filter `b`
/// spans `centers[b-1]..centers[b+1]`, with the outer edges extrapolated
/// geometrically. A filter narrower than the STFT bin spacing selects the
/// nearest STFT bin instead.
///
/// Each filter is scaled so that a Hann-windowed sinusoid at its centre
/// frequency produces the sinusoid's on-bin STFT magnitude. Unscaled, wide
/// high filters would collect more of the window's main lobe than narrow
/// low ones, and a transposed tone would change level.
pub fn logfreq_filterbank(centers: &[f64], window_size: usize, sample_rate: u32) -> Filterbank {
    let n_fft_bins = window_size / 2 + 1;
    let bin_hz = sample_rate as f64 / window_size as f64;
    let n = centers.len();
    let edge = |i: isize| -> f64 {
        if i < 0 {
            centers[0] * centers[0] / centers[1]
        } else if i as usize >= n {
            centers[n - 1] * centers[n - 1] / centers[n - 2]
        } else {
            centers[i as usize]
        }
    };
    let dense = (0..n)
        .map(|b| {
            let (lo, c, hi) = (edge(b as isize - 1), centers[b], edge(b as isize + 1));
            let mut row: Vec<f32> = (0..n_fft_bins).map(|k| triangle(k as f64 * bin_hz, lo, c, hi)).collect();
            if row.iter().all(|&w| w == 0.0) {
                let nearest = ((c / bin_hz).round() as usize).min(n_fft_bins - 1);
                row[nearest] = 1.0;
            }
            let response: f64 = row
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(k, &w)| w as f64 * hann_response(k as f64 - c / bin_hz))
                .sum();
            if response > 0.0 {
                for w in &mut row {
                    *w = (*w as f64 / response) as f32;
                }
            }
            row
        })
        .collect();
    Filterbank::from_dense(n_fft_bins, dense)
}
