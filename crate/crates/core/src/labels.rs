//! Class codecs for tempo (integer BPM 30..=285) and key (24 major/minor
//! keys), plus the label adjustments that accompany augmentation.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const TEMPO_MIN: u32 = 30;
pub const TEMPO_MAX: u32 = 285;
pub const N_TEMPO_CLASSES: usize = (TEMPO_MAX - TEMPO_MIN + 1) as usize;
pub const N_KEY_CLASSES: usize = 24;

/// Semitone shifts admitted by the pitch-shift crop.
pub const PITCH_SHIFTS: std::ops::RangeInclusive<i32> = -4..=7;

/// Time-scale factors 0.80, 0.84, ..., 1.20.
pub const TIME_SCALE_FACTORS: [f64; 11] = [0.8, 0.84, 0.88, 0.92, 0.96, 1.0, 1.04, 1.08, 1.12, 1.16, 1.2];

pub fn tempo_to_class(bpm: u32) -> Result<usize> {
    if !(TEMPO_MIN..=TEMPO_MAX).contains(&bpm) {
        return Err(Error::Label(format!("tempo {bpm} outside {TEMPO_MIN}..={TEMPO_MAX} BPM")));
    }
    Ok((bpm - TEMPO_MIN) as usize)
}

pub fn class_to_tempo(class: usize) -> Result<u32> {
    if class >= N_TEMPO_CLASSES {
        return Err(Error::Label(format!("tempo class {class} outside 0..{N_TEMPO_CLASSES}")));
    }
    Ok(class as u32 + TEMPO_MIN)
}

/// Tempo after stretching the time axis by `factor`: `round(bpm / factor)`,
/// clamped to the representable range.
pub fn scale_tempo_label(bpm: u32, factor: f64) -> Result<u32> {
    if !TIME_SCALE_FACTORS.iter().any(|f| (f - factor).abs() < 1e-9) {
        return Err(Error::Label(format!("time-scale factor {factor} is not one of {TIME_SCALE_FACTORS:?}")));
    }
    let scaled = (bpm as f64 / factor).round();
    Ok(scaled.clamp(TEMPO_MIN as f64, TEMPO_MAX as f64) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KeyMode {
    Major,
    Minor,
}

/// Tonic pitch class (0 = C, ascending semitones) and mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeyLabel {
    tonic: u8,
    mode: KeyMode,
}

const PITCH_NAMES: [&str; 12] = ["c", "c#", "d", "d#", "e", "f", "f#", "g", "g#", "a", "a#", "b"];

impl KeyLabel {
    pub fn new(tonic: u8, mode: KeyMode) -> Result<Self> {
        if tonic >= 12 {
            return Err(Error::Label(format!("tonic {tonic} outside 0..12")));
        }
        Ok(KeyLabel { tonic, mode })
    }

    pub fn tonic(self) -> u8 {
        self.tonic
    }

    pub fn mode(self) -> KeyMode {
        self.mode
    }

    pub fn class(self) -> usize {
        key_to_class(self)
    }

    /// All 24 keys in class order.
    pub fn all() -> impl Iterator<Item = KeyLabel> {
        (0..N_KEY_CLASSES).map(|c| class_to_key(c).unwrap())
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            KeyMode::Major => "maj",
            KeyMode::Minor => "min",
        };
        write!(f, "{}:{mode}", PITCH_NAMES[self.tonic as usize])
    }
}

impl FromStr for KeyLabel {
    type Err = Error;

    /// Accepts forms like `C:maj`, `c#:min`, `Db minor`, `bb major`, `A`
    /// (major when the mode is omitted).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Label(format!("cannot parse key {s:?}"));
        let trimmed = s.trim();
        let letter = trimmed.chars().next().ok_or_else(bad)?;
        let mut pc: i32 = match letter.to_ascii_lowercase() {
            'c' => 0,
            'd' => 2,
            'e' => 4,
            'f' => 5,
            'g' => 7,
            'a' => 9,
            'b' => 11,
            _ => return Err(bad()),
        };
        let mut rest = &trimmed[letter.len_utf8()..];
        // at most one accidental
        if let Some(ch) = rest.chars().next() {
            let step = match ch {
                '#' | '♯' => 1,
                'b' | '♭' => -1,
                _ => 0,
            };
            if step != 0 {
                pc += step;
                rest = &rest[ch.len_utf8()..];
            }
        }
        let rest = rest.trim_start_matches([':', ' ', '\t', '_', '-']).trim().to_ascii_lowercase();
        let mode = match rest.as_str() {
            "" | "maj" | "major" => KeyMode::Major,
            "min" | "minor" | "m" => KeyMode::Minor,
            _ => return Err(bad()),
        };
        KeyLabel::new(pc.rem_euclid(12) as u8, mode)
    }
}

pub fn key_to_class(label: KeyLabel) -> usize {
    label.tonic as usize + if label.mode == KeyMode::Minor { 12 } else { 0 }
}

pub fn class_to_key(class: usize) -> Result<KeyLabel> {
    if class >= N_KEY_CLASSES {
        return Err(Error::Label(format!("key class {class} outside 0..{N_KEY_CLASSES}")));
    }
    let mode = if class < 12 { KeyMode::Major } else { KeyMode::Minor };
    KeyLabel::new((class % 12) as u8, mode)
}

/// Label of a spectrogram cropped with window start `8 + 2s`: moving the
/// window up by `s` semitones shows the content `s` semitones lower.
pub fn shift_key_label(label: KeyLabel, s: i32) -> Result<KeyLabel> {
    if !PITCH_SHIFTS.contains(&s) {
        return Err(Error::Label(format!("pitch shift {s} outside {PITCH_SHIFTS:?}")));
    }
    KeyLabel::new((label.tonic as i32 - s).rem_euclid(12) as u8, label.mode)
}

/// Which of the two estimation problems a component serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Tempo,
    Key,
}

impl Task {
    pub fn n_classes(self) -> usize {
        match self {
            Task::Tempo => N_TEMPO_CLASSES,
            Task::Key => N_KEY_CLASSES,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Tempo => "tempo",
            Task::Key => "key",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tempo" => Ok(Task::Tempo),
            "key" => Ok(Task::Key),
            other => Err(Error::Config(format!("unknown task {other:?} (expected tempo or key)"))),
        }
    }
}

/// Ground truth of one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Tempo(u32),
    Key(KeyLabel),
}

impl Label {
    pub fn parse(task: Task, text: &str) -> Result<Label> {
        match task {
            Task::Tempo => {
                let bpm: u32 = text
                    .trim()
                    .parse()
                    .map_err(|_| Error::Label(format!("tempo {text:?} is not an integer BPM")))?;
                tempo_to_class(bpm)?;
                Ok(Label::Tempo(bpm))
            }
            Task::Key => Ok(Label::Key(text.parse()?)),
        }
    }

    pub fn task(self) -> Task {
        match self {
            Label::Tempo(_) => Task::Tempo,
            Label::Key(_) => Task::Key,
        }
    }

    pub fn class(self) -> Result<usize> {
        match self {
            Label::Tempo(bpm) => tempo_to_class(bpm),
            Label::Key(k) => Ok(key_to_class(k)),
        }
    }

    pub fn from_class(task: Task, class: usize) -> Result<Label> {
        match task {
            Task::Tempo => class_to_tempo(class).map(Label::Tempo),
            Task::Key => class_to_key(class).map(Label::Key),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Tempo(bpm) => write!(f, "{bpm}"),
            Label::Key(k) => write!(f, "{k}"),
        }
    }
}
