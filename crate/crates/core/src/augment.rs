//! Spectrogram-domain training transforms and the per-task preparation of
//! network inputs (augment, crop, standardize).

use rand::Rng;

use crate::dsp::{normalize_sample, NORMALIZE_EPS};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labels::{scale_tempo_label, shift_key_label, Label, Task, PITCH_SHIFTS, TIME_SCALE_FACTORS};
use crate::model::TaskConfig;

/// Rows of the log-frequency spectrogram before the pitch-shift crop.
pub const KEY_SOURCE_BINS: usize = 192;
/// Start row of the unshifted crop (E1, four semitones above C1).
pub const KEY_BASE_OFFSET: usize = 8;

/// Rectangle of a source grid selected by a crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub time_offset: usize,
    pub width: usize,
    pub freq_offset: usize,
    pub height: usize,
}

impl CropWindow {
    pub fn apply(&self, grid: &Grid) -> Result<Grid> {
        grid.window(self.freq_offset, self.time_offset, self.height, self.width)
    }
}

fn check_width(grid: &Grid, width: usize) -> Result<()> {
    if width == 0 || grid.cols() < width {
        return Err(Error::Augment(format!(
            "cannot crop {width} frames from a {}-frame spectrogram",
            grid.cols()
        )));
    }
    Ok(())
}

/// `width` contiguous frames at an offset uniform over `0..=T-width`.
pub fn random_time_crop<R: Rng + ?Sized>(grid: &Grid, width: usize, rng: &mut R) -> Result<Grid> {
    check_width(grid, width)?;
    let offset = rng.gen_range(0..=grid.cols() - width);
    grid.window(0, offset, grid.rows(), width)
}

/// `width` frames starting at `floor((T - width) / 2)`.
pub fn center_time_crop(grid: &Grid, width: usize) -> Result<Grid> {
    check_width(grid, width)?;
    grid.window(0, (grid.cols() - width) / 2, grid.rows(), width)
}

/// Rows `8 + 2s .. 8 + 2s + 168` of a 192-row log-frequency grid.
pub fn pitch_shift_crop(grid: &Grid, s: i32) -> Result<Grid> {
    if grid.rows() != KEY_SOURCE_BINS {
        return Err(Error::Augment(format!(
            "pitch-shift crop needs {KEY_SOURCE_BINS} rows, got {}",
            grid.rows()
        )));
    }
    if !PITCH_SHIFTS.contains(&s) {
        return Err(Error::Augment(format!("pitch shift {s} outside {PITCH_SHIFTS:?}")));
    }
    let start = (KEY_BASE_OFFSET as i32 + 2 * s) as usize;
    grid.window(start, 0, TaskConfig::KEY.input_bins, grid.cols())
}

/// Resamples every row to `round(factor * T)` frames; output frame `j`
/// reads the source at `j / factor` by linear interpolation.
pub fn time_scale(grid: &Grid, factor: f64) -> Result<Grid> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::Augment(format!("time-scale factor {factor} must be positive")));
    }
    let cols = grid.cols();
    let width = (factor * cols as f64).round() as usize;
    if width == 0 || cols == 0 {
        return Err(Error::Augment(format!("scaling {cols} frames by {factor} leaves nothing")));
    }
    let last = cols - 1;
    let taps: Vec<(usize, usize, f32)> = (0..width)
        .map(|j| {
            let x = (j as f64 / factor).min(last as f64);
            let i0 = x.floor() as usize;
            (i0, (i0 + 1).min(last), (x - i0 as f64) as f32)
        })
        .collect();
    let mut out = Grid::zeros(grid.rows(), width);
    for r in 0..grid.rows() {
        let src = grid.row(r);
        for (d, &(i0, i1, w)) in out.row_mut(r).iter_mut().zip(&taps) {
            *d = src[i0] + (src[i1] - src[i0]) * w;
        }
    }
    Ok(out)
}

/// One augmentation draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    None,
    PitchShift(i32),
    TimeScale(f64),
}

impl Augmentation {
    /// Uniform draw from the task's augmentation set.
    pub fn draw<R: Rng + ?Sized>(task: Task, rng: &mut R) -> Augmentation {
        match task {
            Task::Tempo => Augmentation::TimeScale(TIME_SCALE_FACTORS[rng.gen_range(0..TIME_SCALE_FACTORS.len())]),
            Task::Key => Augmentation::PitchShift(rng.gen_range(PITCH_SHIFTS)),
        }
    }
}

fn standardize(grid: Grid) -> Grid {
    let (rows, cols) = grid.shape();
    Grid::new(rows, cols, normalize_sample(grid.values(), NORMALIZE_EPS)).expect("same shape")
}

/// Applies `aug` to the full-track grid and adjusts the label.
pub fn apply_augmentation(task: Task, grid: &Grid, label: Label, aug: Augmentation) -> Result<(Grid, Label)> {
    match (task, aug, label) {
        (Task::Tempo, Augmentation::None, Label::Tempo(_)) => Ok((grid.clone(), label)),
        (Task::Tempo, Augmentation::TimeScale(f), Label::Tempo(bpm)) => {
            Ok((time_scale(grid, f)?, Label::Tempo(scale_tempo_label(bpm, f)?)))
        }
        (Task::Key, Augmentation::None, Label::Key(_)) => Ok((pitch_shift_crop(grid, 0)?, label)),
        (Task::Key, Augmentation::PitchShift(s), Label::Key(k)) => {
            Ok((pitch_shift_crop(grid, s)?, Label::Key(shift_key_label(k, s)?)))
        }
        _ => Err(Error::Augment(format!("{aug:?} does not apply to {task} label {label}"))),
    }
}

/// Training input: optional random augmentation, random crop to the
/// training width, per-sample standardization. Returns the grid and class.
pub fn prepare_training_sample<R: Rng + ?Sized>(
    task: Task,
    grid: &Grid,
    label: Label,
    augment: bool,
    rng: &mut R,
) -> Result<(Grid, usize)> {
    let aug = if augment { Augmentation::draw(task, rng) } else { Augmentation::None };
    let (grid, label) = apply_augmentation(task, grid, label, aug)?;
    let crop = random_time_crop(&grid, TaskConfig::of(task).train_frames, rng)?;
    Ok((standardize(crop), label.class()?))
}

/// Validation input: no augmentation, centre crop, standardization.
pub fn prepare_eval_sample(task: Task, grid: &Grid, label: Label) -> Result<(Grid, usize)> {
    let (grid, label) = apply_augmentation(task, grid, label, Augmentation::None)?;
    let crop = center_time_crop(&grid, TaskConfig::of(task).train_frames)?;
    Ok((standardize(crop), label.class()?))
}

/// Whole-track inference input: unshifted frequency crop for key, full
/// width, standardization.
pub fn prepare_inference_input(task: Task, grid: &Grid) -> Result<Grid> {
    let grid = match task {
        Task::Tempo => grid.clone(),
        Task::Key => pitch_shift_crop(grid, 0)?,
    };
    Ok(standardize(grid))
}
