//! Tempo and key metrics and whole-track prediction.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::augment::prepare_inference_input;
use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::labels::{KeyLabel, KeyMode, Label};
use crate::model::{batch_tensor, Model};

/// Relative tempo tolerance of both tempo accuracies.
pub const TEMPO_TOLERANCE: f64 = 0.04;
/// Reference multiples credited by Accuracy2.
pub const ACCURACY2_FACTORS: [f64; 5] = [1.0 / 3.0, 0.5, 1.0, 2.0, 3.0];

fn check_reference(reference: f64) -> Result<()> {
    if !(reference.is_finite() && reference > 0.0) {
        return Err(Error::Label(format!("reference tempo {reference} must be positive")));
    }
    Ok(())
}

fn within(estimate: f64, reference: f64) -> bool {
    // the relative slack absorbs representation error at the boundary,
    // e.g. 124.8 - 120 = 4.799999999999997
    (estimate - reference).abs() <= TEMPO_TOLERANCE * reference * (1.0 + 1e-12)
}

/// `|estimate - reference| <= 0.04 * reference`.
pub fn accuracy1(estimate: f64, reference: f64) -> Result<bool> {
    check_reference(reference)?;
    Ok(within(estimate, reference))
}

/// Accuracy1 against any of `reference * {1/3, 1/2, 1, 2, 3}`.
pub fn accuracy2(estimate: f64, reference: f64) -> Result<bool> {
    check_reference(reference)?;
    Ok(ACCURACY2_FACTORS.iter().any(|f| within(estimate, reference * f)))
}

pub fn key_accuracy(estimate: KeyLabel, reference: KeyLabel) -> bool {
    estimate == reference
}

/// 1 for the exact key, 0.5 a fifth away in either direction (same mode),
/// 0.3 for the relative key, 0.2 for the parallel key, else 0.
pub fn weighted_key_score(estimate: KeyLabel, reference: KeyLabel) -> f64 {
    let interval = (estimate.tonic() as i32 - reference.tonic() as i32).rem_euclid(12);
    match (estimate.mode() == reference.mode(), reference.mode(), interval) {
        (true, _, 0) => 1.0,
        (true, _, 5 | 7) => 0.5,
        (false, KeyMode::Major, 9) | (false, KeyMode::Minor, 3) => 0.3,
        (false, _, 0) => 0.2,
        _ => 0.0,
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub id: String,
    pub class: usize,
    pub distribution: Vec<f32>,
    pub label: Label,
}

/// Evaluation-mode forward pass over a whole full-track spectrogram (192
/// rows for key, cropped to the unshifted 168-row window).
pub fn predict_track(model: &Model<f32>, id: &str, spectrogram: &Grid) -> Result<Prediction> {
    let task = model.config().task.task;
    let input = prepare_inference_input(task, spectrogram)?;
    let out = model.infer(&batch_tensor(&[&input])?)?;
    let distribution = out.to_vec();
    let class = argmax(&distribution);
    Ok(Prediction {
        id: id.to_string(),
        class,
        label: Label::from_class(task, class)?,
        distribution,
    })
}

/// Per-dataset scores; tempo and key sets report different metrics.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DatasetScores {
    Tempo { n: usize, accuracy1: f64, accuracy2: f64 },
    Key { n: usize, key_accuracy: f64, weighted_score: f64 },
}

impl DatasetScores {
    /// Accuracy1 for tempo, exact-key accuracy for key.
    pub fn headline(&self) -> f64 {
        match self {
            DatasetScores::Tempo { accuracy1, .. } => *accuracy1,
            DatasetScores::Key { key_accuracy, .. } => *key_accuracy,
        }
    }
}

/// Score of one estimate: (headline hit, secondary score).
pub fn score_pair(estimate: Label, reference: Label) -> Result<(f64, f64)> {
    let as_f = |b: bool| if b { 1.0 } else { 0.0 };
    match (estimate, reference) {
        (Label::Tempo(e), Label::Tempo(r)) => {
            Ok((as_f(accuracy1(e as f64, r as f64)?), as_f(accuracy2(e as f64, r as f64)?)))
        }
        (Label::Key(e), Label::Key(r)) => Ok((as_f(key_accuracy(e, r)), weighted_key_score(e, r))),
        _ => Err(Error::Label(format!("cannot compare {estimate} with {reference}"))),
    }
}

/// Means of per-item scores.
pub fn aggregate(pairs: &[(Label, Label)]) -> Result<Option<DatasetScores>> {
    let Some(&(_, first)) = pairs.first() else { return Ok(None) };
    let mut sums = (0.0, 0.0);
    for &(e, r) in pairs {
        let (a, b) = score_pair(e, r)?;
        sums.0 += a;
        sums.1 += b;
    }
    let n = pairs.len();
    let (a, b) = (sums.0 / n as f64, sums.1 / n as f64);
    Ok(Some(match first {
        Label::Tempo(_) => DatasetScores::Tempo { n, accuracy1: a, accuracy2: b },
        Label::Key(_) => DatasetScores::Key { n, key_accuracy: a, weighted_score: b },
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub references: Vec<Label>,
    pub per_dataset: BTreeMap<String, DatasetScores>,
}

/// Predicts every sample (in parallel) and scores per dataset tag.
pub fn evaluate(model: &Model<f32>, samples: &[LabeledSample]) -> Result<Evaluation> {
    let predictions: Vec<Prediction> = samples
        .par_iter()
        .map(|s| predict_track(model, &s.id, &s.spectrogram))
        .collect::<Result<_>>()?;
    let mut groups: BTreeMap<String, Vec<(Label, Label)>> = BTreeMap::new();
    for (p, s) in predictions.iter().zip(samples) {
        groups.entry(s.dataset.clone()).or_default().push((p.label, s.label));
    }
    let mut per_dataset = BTreeMap::new();
    for (tag, pairs) in groups {
        if let Some(scores) = aggregate(&pairs)? {
            per_dataset.insert(tag, scores);
        }
    }
    Ok(Evaluation {
        predictions,
        references: samples.iter().map(|s| s.label).collect(),
        per_dataset,
    })
}
