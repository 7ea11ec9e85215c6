//! Manifests, seeded splits, synthetic corpora and spectrogram loading.

mod manifest;
mod split;
mod synth;

pub use manifest::{load_manifest, parse_manifest, write_manifest, write_manifest_to, ManifestEntry, MANIFEST_HEADER};
pub use split::{split, Fractions, Split, SplitSpec};
pub use synth::{
    synth_click_track, synth_key_clip, Chord, ClickParams, KeyClipParams, CHORD_SECONDS, CLICK_DECAY_FRACTION,
    CLICK_SNR, HARMONICS, HIGHEST_NOTE, LOWEST_NOTE,
};

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::dsp::{self, AudioBuffer, Spectrogram, SpectrogramKind, SpectrogramSpec};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labels::{class_to_key, Label, Task, N_KEY_CLASSES};
use crate::rng::{stream, STREAM_SYNTH};

pub const CACHE_EXTENSION: &str = "tksp";
pub const SYNTH_DATASET: &str = "synth";

pub fn spectrogram_spec(task: Task) -> SpectrogramSpec {
    match task {
        Task::Tempo => SpectrogramSpec::tempo(),
        Task::Key => SpectrogramSpec::key(),
    }
}

/// Mel spectrogram for tempo, 192-bin log-frequency spectrogram for key.
pub fn task_spectrogram(task: Task, audio: &AudioBuffer) -> Result<Spectrogram> {
    dsp::spectrogram(audio, &spectrogram_spec(task))
}

/// Parameters of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub task: Task,
    pub count: usize,
    pub seed: u64,
    /// Clip length in seconds.
    pub duration: f64,
    /// Inclusive tempo range of tempo corpora.
    pub bpm_range: (u32, u32),
}

impl CorpusSpec {
    /// 16 s click tracks (long enough for a 256-frame crop after 0.8x
    /// time scaling) with tempi uniform in 60..=180.
    pub fn tempo(count: usize, seed: u64) -> CorpusSpec {
        CorpusSpec {
            task: Task::Tempo,
            count,
            seed,
            duration: 16.0,
            bpm_range: (60, 180),
        }
    }

    /// 12 s chord clips, keys uniform over all 24.
    pub fn key(count: usize, seed: u64) -> CorpusSpec {
        CorpusSpec {
            task: Task::Key,
            count,
            seed,
            duration: 12.0,
            bpm_range: (60, 180),
        }
    }

    pub fn sample_rate(&self) -> u32 {
        spectrogram_spec(self.task).sample_rate
    }
}

#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub id: String,
    pub label: Label,
    pub audio: AudioBuffer,
}

/// Item `index` of the corpus; independent of the other items.
pub fn generate_item(spec: &CorpusSpec, index: usize) -> Result<CorpusItem> {
    let mut rng = stream(spec.seed, &[STREAM_SYNTH, index as u64]);
    let (label, audio) = match spec.task {
        Task::Tempo => {
            let (lo, hi) = spec.bpm_range;
            if lo > hi {
                return Err(Error::Config(format!("empty tempo range {lo}..={hi}")));
            }
            let bpm = rng.gen_range(lo..=hi);
            (Label::Tempo(bpm), synth_click_track(bpm, spec.duration, spec.sample_rate(), &mut rng)?)
        }
        Task::Key => {
            let key = class_to_key(rng.gen_range(0..N_KEY_CLASSES))?;
            (Label::Key(key), synth_key_clip(key, spec.duration, spec.sample_rate(), &mut rng))
        }
    };
    Ok(CorpusItem {
        id: format!("{}{index:05}", spec.task.name()),
        label,
        audio,
    })
}

pub fn generate_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusItem>> {
    (0..spec.count).into_par_iter().map(|i| generate_item(spec, i)).collect()
}

/// Writes `<id>.wav` files and `manifest.csv` into `out_dir`; returns the
/// manifest entries (paths relative to `out_dir`).
pub fn write_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let entries: Vec<ManifestEntry> = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let item = generate_item(spec, i)?;
            let file = format!("{}.wav", item.id);
            dsp::write_wav(out_dir.join(&file), &item.audio)?;
            Ok(ManifestEntry {
                id: item.id,
                path: PathBuf::from(file),
                label: item.label,
                dataset: SYNTH_DATASET.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    write_manifest(out_dir.join("manifest.csv"), &entries)?;
    Ok(entries)
}

/// A full-track spectrogram with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub id: String,
    pub dataset: String,
    pub label: Label,
    pub spectrogram: Grid,
}

pub fn cache_path(cache_dir: &Path, id: &str) -> PathBuf {
    cache_dir.join(format!("{id}.{CACHE_EXTENSION}"))
}

fn expected_kind(task: Task) -> SpectrogramKind {
    spectrogram_spec(task).kind
}

/// Spectrogram of one entry: the entry's own cache file, a file in
/// `cache_dir`, or computed from the audio.
pub fn entry_spectrogram(entry: &ManifestEntry, task: Task, cache_dir: Option<&Path>) -> Result<Spectrogram> {
    let is_cache = entry.path.extension().is_some_and(|e| e == CACHE_EXTENSION);
    let cached = if is_cache {
        Some(entry.path.clone())
    } else {
        cache_dir.map(|d| cache_path(d, &entry.id)).filter(|p| p.exists())
    };
    let spec = match cached {
        Some(p) => dsp::read_cache(&p)?,
        None => task_spectrogram(task, &dsp::load_audio(&entry.path, spectrogram_spec(task).sample_rate)?)?,
    };
    let bins = spectrogram_spec(task).n_bins;
    if spec.kind != expected_kind(task) || spec.n_bins() != bins {
        return Err(Error::ConfigMismatch(format!(
            "{}: {:?} spectrogram with {} bins is not a {task} input ({bins} bins)",
            entry.id,
            spec.kind,
            spec.n_bins()
        )));
    }
    Ok(spec)
}

/// Loads all entries in parallel, preserving order.
pub fn load_samples(entries: &[ManifestEntry], task: Task, cache_dir: Option<&Path>) -> Result<Vec<LabeledSample>> {
    entries
        .par_iter()
        .map(|e| {
            if e.label.task() != task {
                return Err(Error::Label(format!("{}: label {} is not a {task} label", e.id, e.label)));
            }
            Ok(LabeledSample {
                id: e.id.clone(),
                dataset: e.dataset.clone(),
                label: e.label,
                spectrogram: entry_spectrogram(e, task, cache_dir)?.values,
            })
        })
        .collect()
}

/// Spectrograms of generated items, computed in parallel.
pub fn corpus_samples(spec: &CorpusSpec) -> Result<Vec<LabeledSample>> {
    (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let item = generate_item(spec, i)?;
            Ok(LabeledSample {
                id: item.id,
                dataset: SYNTH_DATASET.to_string(),
                label: item.label,
                spectrogram: task_spectrogram(spec.task, &item.audio)?.values,
            })
        })
        .collect()
}
