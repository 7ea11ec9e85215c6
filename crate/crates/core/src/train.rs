//! Training loop (augment, crop, standardize, Adam on cross-entropy),
//! early stopping on validation loss, and repeated-run experiments.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tempokey_tensor::{cross_entropy, Adam, AdamConfig, Mode};

use crate::augment::{prepare_eval_sample, prepare_training_sample};
use crate::data::LabeledSample;
use crate::error::{Error, Result};
use crate::evalmod::{argmax, evaluate, score_pair};
use crate::grid::Grid;
use crate::labels::{Label, Task};
use crate::model::{batch_tensor, Arch, Model, ModelConfig};
use crate::rng::{stream, STREAM_AUGMENT, STREAM_DROPOUT, STREAM_INIT, STREAM_SHUFFLE};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub lr: f64,
    pub batch_size: usize,
    /// Epochs without a strictly lower validation loss before stopping.
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Time-scale (tempo) or pitch-shift (key) augmentation.
    pub augment: bool,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, seed: u64) -> TrainConfig {
        TrainConfig {
            model,
            lr: 0.001,
            batch_size: 32,
            patience: 100,
            max_epochs: 1000,
            seed,
            augment: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// 1-based epoch whose weights were restored.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub wall_seconds: f64,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }

    pub fn best(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Tracks the lowest validation loss and signals a stop after `patience`
/// epochs without strict improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience,
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        let improved = match self.best {
            None => true,
            Some((_, best)) => loss < best,
        };
        if improved {
            self.best = Some((epoch, loss));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        Verdict {
            improved,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

struct Prepared {
    input: Grid,
    class: usize,
    label: Label,
}

/// Loss and accuracy (Accuracy1 for tempo, exact key for key) of centre
/// crops, in evaluation mode.
pub fn validation_metrics(model: &Model<f32>, samples: &[LabeledSample], batch_size: usize) -> Result<(f64, f64)> {
    let task = model.config().task.task;
    let prepared = prepare_eval_set(task, samples)?;
    evaluate_prepared(model, &prepared, batch_size)
}

fn prepare_eval_set(task: Task, samples: &[LabeledSample]) -> Result<Vec<Prepared>> {
    samples
        .par_iter()
        .map(|s| {
            let (input, class) = prepare_eval_sample(task, &s.spectrogram, s.label)?;
            Ok(Prepared {
                input,
                class,
                label: s.label,
            })
        })
        .collect()
}

fn evaluate_prepared(model: &Model<f32>, prepared: &[Prepared], batch_size: usize) -> Result<(f64, f64)> {
    if prepared.is_empty() {
        return Err(Error::Empty("validation set".into()));
    }
    let task = model.config().task.task;
    let per_batch: Vec<(f64, f64)> = prepared
        .par_chunks(batch_size)
        .map(|chunk| {
            let grids: Vec<&Grid> = chunk.iter().map(|p| &p.input).collect();
            let classes: Vec<usize> = chunk.iter().map(|p| p.class).collect();
            let probs = model.infer(&batch_tensor(&grids)?)?;
            let loss = cross_entropy(&probs, &classes)?.item() as f64 * chunk.len() as f64;
            let n_classes = model.config().task.n_classes;
            let values = probs.to_vec();
            let mut hits = 0.0;
            for (row, p) in values.chunks(n_classes).zip(chunk) {
                hits += score_pair(Label::from_class(task, argmax(row))?, p.label)?.0;
            }
            Ok((loss, hits))
        })
        .collect::<Result<_>>()?;
    let n = prepared.len() as f64;
    let (loss, hits) = per_batch.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1));
    Ok((loss / n, hits / n))
}

/// Trains `model` in place and restores the weights of the epoch with the
/// lowest validation loss. `on_epoch` sees every epoch as it finishes.
pub fn train_with_callback(
    model: &mut Model<f32>,
    train_set: &[LabeledSample],
    validation_set: &[LabeledSample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    if model.config() != &config.model {
        return Err(Error::ConfigMismatch(format!(
            "model {:?} does not match training config {:?}",
            model.config(),
            config.model
        )));
    }
    if train_set.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let task = config.model.task.task;
    let started = Instant::now();
    let val = prepare_eval_set(task, validation_set)?;
    let params = model.parameters();
    let mut adam = Adam::new(
        AdamConfig {
            lr: config.lr,
            ..AdamConfig::default()
        },
        &params,
    );
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_blobs = model.blobs();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.sort_unstable();
        order.shuffle(&mut stream(config.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let batch: Vec<(Grid, usize)> = order
            .par_iter()
            .map(|&i| {
                let s = &train_set[i];
                let mut rng = stream(config.seed, &[STREAM_AUGMENT, epoch as u64, i as u64]);
                prepare_training_sample(task, &s.spectrogram, s.label, config.augment, &mut rng)
            })
            .collect::<Result<_>>()?;

        let mut loss_sum = 0.0;
        for (b, chunk) in batch.chunks(config.batch_size).enumerate() {
            let grids: Vec<&Grid> = chunk.iter().map(|(g, _)| g).collect();
            let classes: Vec<usize> = chunk.iter().map(|(_, c)| *c).collect();
            let mut rng = stream(config.seed, &[STREAM_DROPOUT, epoch as u64, b as u64]);
            let probs = model.forward(&batch_tensor(&grids)?, Mode::Train, &mut rng)?;
            let loss = cross_entropy(&probs, &classes)?;
            let value = loss.item() as f64;
            if !value.is_finite() {
                return Err(Error::Divergence { epoch, loss: value });
            }
            for p in &params {
                p.zero_grad();
            }
            loss.backward()?;
            adam.step(&params)?;
            loss_sum += value * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_acc) = evaluate_prepared(model, &val, config.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_acc,
        };
        on_epoch(&record);
        history.push(record);
        let verdict = stopper.observe(epoch, val_loss);
        if verdict.improved {
            best_blobs = model.blobs();
        }
        if verdict.stop {
            break;
        }
    }
    model.set_blobs(&best_blobs)?;
    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_loss,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn train(
    model: &mut Model<f32>,
    train_set: &[LabeledSample],
    validation_set: &[LabeledSample],
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with_callback(model, train_set, validation_set, config, |_| {})
}

/// Builds a model from the config's initialization stream and trains it.
pub fn build_and_train(
    train_set: &[LabeledSample],
    validation_set: &[LabeledSample],
    config: &TrainConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model<f32>, TrainReport)> {
    let mut model = Model::build(config.model, &mut stream(config.seed, &[STREAM_INIT]))?;
    let report = train_with_callback(&mut model, train_set, validation_set, config, on_epoch)?;
    Ok((model, report))
}

/// One line of the experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arch: String,
    pub task: String,
    pub k: usize,
    #[serde(rename = "p_D")]
    pub p_d: f64,
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub val_acc: f64,
    pub test_accs: BTreeMap<String, f64>,
    pub param_count: usize,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Dropout probability with the highest mean validation accuracy among
/// `records`; ties go to the lower probability.
pub fn select_best(records: &[RunRecord]) -> Result<f64> {
    let mut by_p: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_p.entry(r.p_d.to_bits()).or_default().push(r.val_acc);
    }
    let mut ranked: Vec<(f64, f64)> = by_p.into_iter().map(|(bits, accs)| (f64::from_bits(bits), mean_std(&accs).0)).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0));
    ranked
        .into_iter()
        .fold(None, |best: Option<(f64, f64)>, cand| match best {
            Some(b) if b.1 >= cand.1 => Some(b),
            _ => Some(cand),
        })
        .map(|(p, _)| p)
        .ok_or_else(|| Error::Empty("no runs to select from".into()))
}

/// Grid of configurations, each trained `runs` times with seeds
/// `seed, seed + 1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub task: Task,
    pub archs: Vec<Arch>,
    pub ks: Vec<usize>,
    pub dropouts: Vec<f64>,
    pub runs: usize,
    pub base: TrainConfig,
}

impl ExperimentGrid {
    pub fn configs(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &arch in &self.archs {
            for &k in &self.ks {
                for &p in &self.dropouts {
                    for run in 0..self.runs {
                        let mut c = self.base.clone();
                        c.model = ModelConfig::new(arch, self.task, k, p);
                        c.seed = self.base.seed + run as u64;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

/// Mean and standard deviation over the runs of one configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub arch: String,
    pub task: String,
    pub k: usize,
    #[serde(rename = "p_D")]
    pub p_d: f64,
    pub runs: usize,
    pub val_acc_mean: f64,
    pub val_acc_std: f64,
    pub test_acc_mean: BTreeMap<String, f64>,
    pub test_acc_std: BTreeMap<String, f64>,
}

/// Arch, task, k and the bits of p_D.
type GroupKey = (String, String, usize, u64);

pub fn summarize(records: &[RunRecord]) -> Vec<Summary> {
    let mut groups: Vec<(GroupKey, Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (r.arch.clone(), r.task.clone(), r.k, r.p_d.to_bits());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    groups
        .into_iter()
        .map(|((arch, task, k, p), runs)| {
            let (val_acc_mean, val_acc_std) = mean_std(&runs.iter().map(|r| r.val_acc).collect::<Vec<_>>());
            let mut test_acc_mean = BTreeMap::new();
            let mut test_acc_std = BTreeMap::new();
            let tags: std::collections::BTreeSet<&String> = runs.iter().flat_map(|r| r.test_accs.keys()).collect();
            for tag in tags {
                let vals: Vec<f64> = runs.iter().filter_map(|r| r.test_accs.get(tag).copied()).collect();
                let (m, s) = mean_std(&vals);
                test_acc_mean.insert(tag.clone(), m);
                test_acc_std.insert(tag.clone(), s);
            }
            Summary {
                arch,
                task,
                k,
                p_d: f64::from_bits(p),
                runs: runs.len(),
                val_acc_mean,
                val_acc_std,
                test_acc_mean,
                test_acc_std,
            }
        })
        .collect()
}

/// Trains one configuration and scores it on the test sets.
pub fn run_once(
    config: &TrainConfig,
    train_set: &[LabeledSample],
    validation_set: &[LabeledSample],
    test_set: &[LabeledSample],
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<(RunRecord, Model<f32>, TrainReport)> {
    let (model, report) = build_and_train(train_set, validation_set, config, on_epoch)?;
    let test_accs = if test_set.is_empty() {
        BTreeMap::new()
    } else {
        evaluate(&model, test_set)?
            .per_dataset
            .into_iter()
            .map(|(tag, s)| (tag, s.headline()))
            .collect()
    };
    let record = RunRecord {
        arch: config.model.arch.arch.name().into(),
        task: config.model.task.task.name().into(),
        k: config.model.arch.k,
        p_d: config.model.arch.dropout,
        seed: config.seed,
        epochs: report.epochs_run(),
        best_epoch: report.best_epoch,
        val_acc: report.best().val_acc,
        test_accs,
        param_count: model.count_parameters(),
    };
    Ok((record, model, report))
}

/// Runs every configuration of the grid in order; `on_run` receives each
/// finished record and model (e.g. to save weights or append a report line).
pub fn run_experiment(
    grid: &ExperimentGrid,
    train_set: &[LabeledSample],
    validation_set: &[LabeledSample],
    test_set: &[LabeledSample],
    mut on_run: impl FnMut(&RunRecord, &Model<f32>) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    let mut records = Vec::new();
    for config in grid.configs() {
        let (record, model, _) = run_once(&config, train_set, validation_set, test_set, |_| {})?;
        on_run(&record, &model)?;
        records.push(record);
    }
    Ok(records)
}

/// Writes one JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut writer: W, items: &[T]) -> Result<()> {
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::Serde(e.to_string()))?;
    }
    Ok(())
}
