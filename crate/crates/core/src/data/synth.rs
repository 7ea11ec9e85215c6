use std::f64::consts::TAU;

use rand::Rng;

use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use crate::labels::{KeyLabel, KeyMode, TEMPO_MAX, TEMPO_MIN};

/// Click decay time as a fraction of the beat period. Tying the decay to
/// the period keeps the distribution of spectrogram columns roughly the
/// same at every tempo, so only the temporal pattern carries tempo.
pub const CLICK_DECAY_FRACTION: f64 = 0.09;
/// Ratio of click power to noise-floor power (20 dB).
pub const CLICK_SNR: f64 = 100.0;

/// Random choices behind one click track.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickParams {
    pub bpm: u32,
    /// Time of the first click in seconds, in `[0, period)`.
    pub phase: f64,
    /// Coefficient of the one-pole lowpass that colours the bursts.
    pub lowpass: f64,
    pub decay: f64,
}

impl ClickParams {
    pub fn draw<R: Rng + ?Sized>(bpm: u32, rng: &mut R) -> Result<ClickParams> {
        if !(TEMPO_MIN..=TEMPO_MAX).contains(&bpm) {
            return Err(Error::Label(format!("tempo {bpm} outside {TEMPO_MIN}..={TEMPO_MAX} BPM")));
        }
        let period = 60.0 / bpm as f64;
        Ok(ClickParams {
            bpm,
            phase: rng.gen_range(0.0..period),
            lowpass: rng.gen_range(0.0..0.9),
            decay: CLICK_DECAY_FRACTION * period,
        })
    }

    pub fn period(&self) -> f64 {
        60.0 / self.bpm as f64
    }

    /// Click onset times within `duration` seconds.
    pub fn onsets(&self, duration: f64) -> Vec<f64> {
        (0..)
            .map(|i| self.phase + i as f64 * self.period())
            .take_while(|&t| t < duration)
            .collect()
    }

    pub fn render<R: Rng + ?Sized>(&self, duration: f64, sample_rate: u32, rng: &mut R) -> AudioBuffer {
        let n = (duration * sample_rate as f64).round() as usize;
        let sr = sample_rate as f64;
        let mut out = vec![0.0f64; n];
        let burst_len = ((6.0 * self.decay * sr).ceil() as usize).max(1);
        for t in self.onsets(duration) {
            let start = (t * sr).round() as usize;
            let gain = rng.gen_range(0.8..1.0);
            let mut y = 0.0;
            for (i, o) in out.iter_mut().skip(start).take(burst_len).enumerate() {
                let x: f64 = rng.gen_range(-1.0..1.0);
                y = (1.0 - self.lowpass) * x + self.lowpass * y;
                *o += gain * y * (-(i as f64) / (self.decay * sr)).exp();
            }
        }
        let power = out.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
        // uniform noise on [-a, a] has power a^2 / 3
        let a = (3.0 * power / CLICK_SNR).sqrt();
        for o in &mut out {
            *o += rng.gen_range(-1.0..=1.0) * a;
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 0.9 / peak } else { 0.0 };
        AudioBuffer {
            samples: out.iter().map(|v| (v * scale) as f32).collect(),
            sample_rate,
        }
    }
}

/// Noise-burst clicks every `60/bpm` seconds from a random phase, over a
/// noise floor at 20 dB below the click power.
pub fn synth_click_track<R: Rng + ?Sized>(bpm: u32, duration: f64, sample_rate: u32, rng: &mut R) -> Result<AudioBuffer> {
    Ok(ClickParams::draw(bpm, rng)?.render(duration, sample_rate, rng))
}

pub const CHORD_SECONDS: f64 = 1.5;
pub const LOWEST_NOTE: i32 = 36;
pub const HIGHEST_NOTE: i32 = 83;
pub const HARMONICS: usize = 6;
const TONIC_WEIGHT: f64 = 0.4;

/// Triads per scale degree: (root offset from tonic, minor quality).
const MAJOR_DEGREES: [(i32, bool); 4] = [(0, false), (5, false), (7, false), (9, true)];
const MINOR_DEGREES: [(i32, bool); 4] = [(0, true), (5, true), (7, true), (8, false)];

/// One chord as MIDI note numbers with per-note gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Chord {
    pub notes: Vec<(i32, f64)>,
}

/// Chord sequence behind one key clip.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyClipParams {
    pub chords: Vec<Chord>,
}

fn voice<R: Rng + ?Sized>(root_pc: i32, minor: bool, rng: &mut R) -> Chord {
    let third = if minor { 3 } else { 4 };
    let pcs = [root_pc, root_pc + third, root_pc + 7];
    let inversion = rng.gen_range(0..3);
    let mut rel = Vec::with_capacity(3);
    for i in 0..3 {
        let pc = pcs[(inversion + i) % 3].rem_euclid(12);
        let mut v = pc;
        while let Some(&prev) = rel.last() {
            if v > prev {
                break;
            }
            v += 12;
        }
        rel.push(v);
    }
    let span = rel[2] - rel[0];
    // lowest note b with b ≡ rel[0] (mod 12) and LOWEST <= b, b + span <= HIGHEST
    let candidates: Vec<i32> = (LOWEST_NOTE..=HIGHEST_NOTE - span)
        .filter(|b| b.rem_euclid(12) == rel[0].rem_euclid(12))
        .collect();
    let base = candidates[rng.gen_range(0..candidates.len())];
    Chord {
        notes: rel.iter().map(|r| (base + r - rel[0], rng.gen_range(0.7..1.0))).collect(),
    }
}

impl KeyClipParams {
    /// Progression of `ceil(duration / 1.5)` chords over the key's I, IV, V,
    /// vi triads (i, iv, v, VI in minor), starting and ending on the tonic.
    /// Inner chords are the tonic with probability `TONIC_WEIGHT`, otherwise
    /// one of the other three degrees uniformly.
    pub fn draw<R: Rng + ?Sized>(key: KeyLabel, duration: f64, rng: &mut R) -> KeyClipParams {
        let n = ((duration / CHORD_SECONDS).ceil() as usize).max(1);
        let degrees = match key.mode() {
            KeyMode::Major => &MAJOR_DEGREES,
            KeyMode::Minor => &MINOR_DEGREES,
        };
        let chords = (0..n)
            .map(|i| {
                let d = if i == 0 || i == n - 1 || rng.gen_bool(TONIC_WEIGHT) { 0 } else { rng.gen_range(1..degrees.len()) };
                let (offset, minor) = degrees[d];
                voice(key.tonic() as i32 + offset, minor, rng)
            })
            .collect();
        KeyClipParams { chords }
    }

    pub fn transposed(&self, semitones: i32) -> KeyClipParams {
        KeyClipParams {
            chords: self
                .chords
                .iter()
                .map(|c| Chord {
                    notes: c.notes.iter().map(|&(m, g)| (m + semitones, g)).collect(),
                })
                .collect(),
        }
    }

    /// Additive synthesis: each note has six harmonics at amplitude `1/h`,
    /// with 10 ms fades at chord boundaries.
    pub fn render(&self, duration: f64, sample_rate: u32) -> AudioBuffer {
        let sr = sample_rate as f64;
        let n = (duration * sr).round() as usize;
        let chord_len = (CHORD_SECONDS * sr).round() as usize;
        let fade = (0.01 * sr) as usize;
        let mut out = vec![0.0f64; n];
        for (ci, chord) in self.chords.iter().enumerate() {
            let start = ci * chord_len;
            let end = ((ci + 1) * chord_len).min(n);
            if start >= end {
                break;
            }
            for &(midi, gain) in &chord.notes {
                let f0 = 440.0 * 2f64.powf((midi - 69) as f64 / 12.0);
                let harmonics = (1..=HARMONICS).filter(|&h| h as f64 * f0 < sr / 2.0).count();
                for (i, o) in out[start..end].iter_mut().enumerate() {
                    let theta = TAU * f0 * (start + i) as f64 / sr;
                    let (s1, c1) = theta.sin_cos();
                    // sin(h θ) by the Chebyshev recurrence
                    let (mut prev, mut cur) = (0.0, s1);
                    let mut acc = 0.0;
                    for h in 1..=harmonics {
                        acc += cur / h as f64;
                        let next = 2.0 * c1 * cur - prev;
                        prev = cur;
                        cur = next;
                    }
                    let env = (i.min(end - start - 1 - i) as f64 / fade as f64).min(1.0);
                    *o += gain * env * acc;
                }
            }
        }
        let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if peak > 0.0 { 0.9 / peak } else { 0.0 };
        AudioBuffer {
            samples: out.iter().map(|v| (v * scale) as f32).collect(),
            sample_rate,
        }
    }
}

/// Chord-progression clip in `key`; see [`KeyClipParams::draw`].
pub fn synth_key_clip<R: Rng + ?Sized>(key: KeyLabel, duration: f64, sample_rate: u32, rng: &mut R) -> AudioBuffer {
    KeyClipParams::draw(key, duration, rng).render(duration, sample_rate)
}
