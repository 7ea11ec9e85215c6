//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use tempokey::Grid;

/// Mean-removed, biased autocorrelation of a sequence for lags `0..max_lag`.
pub fn autocorrelation(x: &[f32], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|&v| v as f64 - mean).collect();
    (0..max_lag.min(n))
        .map(|lag| (0..n - lag).map(|t| c[t] * c[t + lag]).sum::<f64>() / n as f64)
        .collect()
}

/// Frame-energy envelope: sum of every column.
pub fn envelope(grid: &Grid) -> Vec<f32> {
    (0..grid.cols()).map(|c| (0..grid.rows()).map(|r| grid.get(r, c)).sum()).collect()
}

/// Beat lag in `lo..=hi`: the smallest local maximum of the envelope
/// autocorrelation within 10% of the largest value in the range. A spiky
/// envelope with a non-integer period scores its multiples about as high
/// as the period itself, so the plain argmax can land on a multiple.
pub fn peak_lag(grid: &Grid, lo: usize, hi: usize) -> usize {
    let ac = autocorrelation(&envelope(grid), hi + 2);
    let best = (lo..=hi).map(|l| ac[l]).fold(f64::MIN, f64::max);
    (lo.max(1)..=hi)
        .find(|&l| ac[l] >= ac[l - 1] && ac[l] >= ac[l + 1] && ac[l] >= best - 0.1 * best.abs())
        .unwrap()
}

fn interp(ac: &[f64], x: f64) -> f64 {
    let i = x.floor() as usize;
    if i + 1 >= ac.len() {
        return ac[ac.len() - 1];
    }
    let f = x - i as f64;
    ac[i] * (1.0 - f) + ac[i + 1] * f
}

/// Tempo with the best comb score: autocorrelation at multiples of the beat
/// lag minus autocorrelation halfway between them.
pub fn comb_tempo(grid: &Grid, frame_duration: f64, bpm_lo: u32, bpm_hi: u32) -> u32 {
    let env = envelope(grid);
    let ac = autocorrelation(&env, env.len() / 2);
    let max_lag = (ac.len() - 2) as f64;
    (bpm_lo..=bpm_hi)
        .max_by(|&a, &b| {
            let score = |bpm: u32| {
                let lag = 60.0 / (bpm as f64 * frame_duration);
                let mut s = 0.0;
                let mut m = 1.0;
                while m * lag <= max_lag {
                    s += interp(&ac, m * lag) - interp(&ac, (m - 0.5) * lag);
                    m += 1.0;
                }
                s / (m - 1.0).max(1.0)
            };
            score(a).total_cmp(&score(b))
        })
        .unwrap()
}

/// Pitch-class profile of a 192-bin (C1-based) log-frequency grid, using
/// the semitone-centred (even) bins only.
pub fn chroma(grid: &Grid) -> [f64; 12] {
    let mut p = [0.0; 12];
    for b in (0..grid.rows()).step_by(2) {
        p[(b / 2) % 12] += grid.row(b).iter().map(|&v| v as f64).sum::<f64>();
    }
    p
}

pub fn top_classes(p: &[f64; 12], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..12).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]));
    idx.truncate(n);
    idx
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Magnitude of the DTFT of `x` at `freq` Hz.
pub fn dtft_magnitude(x: &[f32], sample_rate: f64, freq: f64) -> f64 {
    let w = std::f64::consts::TAU * freq / sample_rate;
    let (mut re, mut im) = (0.0, 0.0);
    for (n, &v) in x.iter().enumerate() {
        re += v as f64 * (w * n as f64).cos();
        im -= v as f64 * (w * n as f64).sin();
    }
    (re * re + im * im).sqrt()
}

pub fn sine(freq: f64, amplitude: f64, n: usize, sample_rate: u32) -> Vec<f32> {
    (0..n)
        .map(|i| (amplitude * (std::f64::consts::TAU * freq * i as f64 / sample_rate as f64).sin()) as f32)
        .collect()
}
