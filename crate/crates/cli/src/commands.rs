use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::Serialize;
use tempokey::data::{
    self, cache_path, entry_spectrogram, load_manifest, load_samples, split, write_corpus, CorpusSpec, Fractions,
    LabeledSample, ManifestEntry, SplitSpec, CACHE_EXTENSION,
};
use tempokey::dsp::{self, Spectrogram};
use tempokey::evalmod::{evaluate, predict_track, Prediction};
use tempokey::model::{load_weights, save_weights, Model};
use tempokey::train::{run_once, select_best, summarize, ExperimentGrid, RunRecord, TrainConfig};
use tempokey::{Arch, Label, ModelConfig, Task};

use crate::args::{EvaluateArgs, ParamsArgs, PredictArgs, PreprocessArgs, SynthArgs, TrainArgs};
use crate::config::{FileConfig, FractionsConfig};
use crate::error::{CliError, Result};

const DEFAULT_VALIDATION: f64 = 0.1;
const DEFAULT_TEST: f64 = 0.1;
const DEFAULT_DROPOUT: f64 = 0.3;

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required (flag or config key)")))
}

fn parse_task(text: Option<&str>) -> Result<Task> {
    required(text, "task")?.parse().map_err(CliError::from)
}

fn optional_task(flag: Option<&str>, file: &FileConfig) -> Result<Option<Task>> {
    flag.or(file.task.as_deref()).map(|t| t.parse().map_err(CliError::from)).transpose()
}

fn list<T: Clone>(flag: Vec<T>, file: Option<&crate::config::OneOrMany<T>>, default: Vec<T>) -> Vec<T> {
    if !flag.is_empty() {
        flag
    } else {
        file.map(|v| v.to_vec()).unwrap_or(default)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| tempokey::Error::Serde(e.to_string()).into())
}

pub fn synth(args: SynthArgs, file: &FileConfig) -> Result<()> {
    let task = parse_task(args.task.as_deref().or(file.task.as_deref()))?;
    let out = required(args.out.or(file.out.clone()), "out")?;
    let count = required(args.count.or(file.count), "count")?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let mut spec = match task {
        Task::Tempo => CorpusSpec::tempo(count, seed),
        Task::Key => CorpusSpec::key(count, seed),
    };
    if let Some(d) = args.duration.or(file.duration) {
        if !(d.is_finite() && d > 0.0) {
            return Err(CliError::Usage(format!("duration {d} must be positive")));
        }
        spec.duration = d;
    }
    spec.bpm_range = (
        args.bpm_min.or(file.bpm_min).unwrap_or(spec.bpm_range.0),
        args.bpm_max.or(file.bpm_max).unwrap_or(spec.bpm_range.1),
    );
    if task == Task::Tempo {
        let (lo, hi) = spec.bpm_range;
        if lo > hi || tempokey::labels::tempo_to_class(lo).is_err() || tempokey::labels::tempo_to_class(hi).is_err() {
            return Err(CliError::Usage(format!("tempo range {lo}..={hi} must lie within 30..=285")));
        }
    }
    let entries = write_corpus(&spec, &out)?;
    eprintln!("wrote {} {task} clips to {}", entries.len(), out.display());
    Ok(())
}

/// Counts of one preprocessing pass.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PreprocessSummary {
    pub written: usize,
    pub up_to_date: usize,
    pub failed: usize,
}

fn modified(path: &Path) -> Option<SystemTime> {
    fs::metadata(path).and_then(|m| m.modified()).ok()
}

/// A cache file is current when it is at least as new as the audio and
/// holds the task's spectrogram kind.
fn cache_is_current(entry: &ManifestEntry, cache: &Path, task: Task) -> bool {
    let (Some(c), Some(a)) = (modified(cache), modified(&entry.path)) else {
        return false;
    };
    let expected = data::spectrogram_spec(task);
    c >= a
        && dsp::read_cache(cache).is_ok_and(|s: Spectrogram| s.kind == expected.kind && s.n_bins() == expected.n_bins)
}

pub fn preprocess_entries(entries: &[ManifestEntry], task: Task, cache_dir: &Path) -> Result<PreprocessSummary> {
    create_dir(cache_dir)?;
    let mut summary = PreprocessSummary::default();
    for entry in entries {
        if entry.path.extension().is_some_and(|e| e == CACHE_EXTENSION) {
            summary.up_to_date += 1;
            continue;
        }
        let target = cache_path(cache_dir, &entry.id);
        if cache_is_current(entry, &target, task) {
            summary.up_to_date += 1;
            continue;
        }
        let result = if entry.label.task() != task {
            Err(tempokey::Error::Label(format!("label {} is not a {task} label", entry.label)))
        } else {
            entry_spectrogram(entry, task, None).and_then(|s| dsp::write_cache(&target, &s))
        };
        match result {
            Ok(()) => summary.written += 1,
            Err(e) => {
                eprintln!("{}: {e}", entry.id);
                summary.failed += 1;
            }
        }
    }
    Ok(summary)
}

pub fn preprocess(args: PreprocessArgs, file: &FileConfig) -> Result<()> {
    let task = parse_task(args.task.as_deref().or(file.task.as_deref()))?;
    let manifest = required(args.manifest.or(file.manifest.clone()), "manifest")?;
    let cache_dir = required(args.cache_dir.or(file.cache_dir.clone()), "cache-dir")?;
    let entries = load_manifest(&manifest, task)?;
    let s = preprocess_entries(&entries, task, &cache_dir)?;
    eprintln!("written {}, up to date {}, failed {}", s.written, s.up_to_date, s.failed);
    if s.failed > 0 {
        return Err(CliError::TracksFailed {
            failed: s.failed,
            total: entries.len(),
        });
    }
    Ok(())
}

fn split_spec(args: &TrainArgs, file: &FileConfig, seed: u64) -> Result<SplitSpec> {
    let section = file.split.clone().unwrap_or_default();
    let validation = args.val_fraction.or(section.validation).unwrap_or(DEFAULT_VALIDATION);
    let test = args.test_fraction.or(section.test).unwrap_or(DEFAULT_TEST);
    let default = Fractions::new(1.0 - validation - test, validation, test)?;
    let per_dataset = section
        .datasets
        .iter()
        .map(|(tag, f): (&String, &FractionsConfig)| Ok((tag.clone(), Fractions::new(f.train, f.validation, f.test)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(SplitSpec {
        default,
        per_dataset,
        seed: args.split_seed.or(section.seed).unwrap_or(seed),
    })
}

fn weights_name(config: &TrainConfig) -> String {
    let a = &config.model.arch;
    format!("{}-k{}-p{}-seed{}", a.arch, a.k, a.dropout, config.seed)
}

#[derive(Debug, Serialize)]
struct Selection {
    arch: String,
    k: usize,
    #[serde(rename = "p_D")]
    p_d: f64,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    configurations: Vec<tempokey::train::Summary>,
    selected: Vec<Selection>,
}

fn pick(samples: &[LabeledSample], entries: &[ManifestEntry]) -> Vec<LabeledSample> {
    let by_id: BTreeMap<&str, &LabeledSample> = samples.iter().map(|s| (s.id.as_str(), s)).collect();
    entries.iter().map(|e| by_id[e.id.as_str()].clone()).collect()
}

pub fn train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let task = parse_task(args.task.as_deref().or(file.task.as_deref()))?;
    let default_arch = match task {
        Task::Tempo => Arch::ShallowTemp,
        Task::Key => Arch::ShallowSpec,
    };
    let archs = list(args.arch.clone(), file.arch.as_ref(), vec![default_arch.name().to_string()])
        .iter()
        .map(|a| a.parse::<Arch>())
        .collect::<tempokey::Result<Vec<_>>>()?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let manifest = required(args.manifest.clone().or(file.manifest.clone()), "manifest")?;
    let out = required(args.out.clone().or(file.out.clone()), "out")?;
    let cache_dir = args.cache_dir.clone().or(file.cache_dir.clone());

    let mut base = TrainConfig::new(ModelConfig::new(archs[0], task, 1, DEFAULT_DROPOUT), seed);
    base.max_epochs = args.epochs.or(file.epochs).unwrap_or(base.max_epochs);
    base.patience = args.patience.or(file.patience).unwrap_or(base.patience);
    base.batch_size = args.batch_size.or(file.batch_size).unwrap_or(base.batch_size);
    base.lr = args.lr.or(file.lr).unwrap_or(base.lr);
    base.augment = !args.no_augment && file.augment.unwrap_or(true);
    let grid = ExperimentGrid {
        task,
        archs,
        ks: list(args.k.clone(), file.k.as_ref(), vec![1]),
        dropouts: list(args.dropout.clone(), file.dropout.as_ref(), vec![DEFAULT_DROPOUT]),
        runs: args.runs.or(file.runs).unwrap_or(1),
        base,
    };
    if grid.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let long_filter_len = args.long_filter_len.or(file.long_filter_len);
    let configs: Vec<TrainConfig> = grid
        .configs()
        .into_iter()
        .map(|mut c| {
            c.model.arch.long_filter_len = long_filter_len;
            c.validate().map(|_| c)
        })
        .collect::<tempokey::Result<_>>()?;

    let entries = load_manifest(&manifest, task)?;
    let parts = split(&entries, &split_spec(&args, file, seed)?);
    let samples = load_samples(&entries, task, cache_dir.as_deref())?;
    let (train_set, val_set, test_set) = (pick(&samples, &parts.train), pick(&samples, &parts.validation), pick(&samples, &parts.test));
    if val_set.is_empty() {
        return Err(CliError::Usage("the split leaves no validation tracks".into()));
    }

    let weights_dir = out.join("weights");
    create_dir(&weights_dir)?;
    let report_path = out.join("report.jsonl");
    let mut report = File::create(&report_path).map_err(|e| CliError::io(&report_path, e))?;
    let mut records: Vec<RunRecord> = Vec::new();
    for config in &configs {
        let name = weights_name(config);
        if !args.quiet {
            eprintln!("training {name} on {} tracks", train_set.len());
        }
        let quiet = args.quiet;
        let (record, model, run) = run_once(config, &train_set, &val_set, &test_set, |r| {
            if !quiet && r.epoch % 10 == 0 {
                eprintln!("  epoch {} train {:.4} val {:.4} acc {:.3}", r.epoch, r.train_loss, r.val_loss, r.val_acc);
            }
        })?;
        save_weights(&model, weights_dir.join(format!("{name}.tkw")))?;
        let history_path = weights_dir.join(format!("{name}.history.jsonl"));
        let mut history = Vec::new();
        tempokey::train::write_jsonl(&mut history, &run.history)?;
        write_file(&history_path, &history)?;
        // one write per line keeps appends line-atomic
        let line = format!("{}\n", serde_json::to_string(&record).map_err(|e| tempokey::Error::Serde(e.to_string()))?);
        report.write_all(line.as_bytes()).map_err(|e| CliError::io(&report_path, e))?;
        report.flush().map_err(|e| CliError::io(&report_path, e))?;
        if !args.quiet {
            eprintln!("  best epoch {} of {}, val acc {:.3}", record.best_epoch, record.epochs, record.val_acc);
        }
        records.push(record);
    }

    let mut selected = Vec::new();
    for &arch in &grid.archs {
        for &k in &grid.ks {
            let group: Vec<RunRecord> = records.iter().filter(|r| r.arch == arch.name() && r.k == k).cloned().collect();
            selected.push(Selection {
                arch: arch.name().into(),
                k,
                p_d: select_best(&group)?,
            });
        }
    }
    let summary = TrainSummary {
        n_train: train_set.len(),
        n_validation: val_set.len(),
        n_test: test_set.len(),
        configurations: summarize(&records),
        selected,
    };
    write_file(&out.join("summary.json"), to_json(&summary)?.as_bytes())?;
    if !args.quiet {
        for s in &summary.configurations {
            let (m, sd) = (s.val_acc_mean, s.val_acc_std);
            eprintln!("{} k={} p={}: val acc {m:.3} ± {sd:.3} over {} runs", s.arch, s.k, s.p_d, s.runs);
        }
    }
    Ok(())
}

fn load_model(weights: Option<PathBuf>, task: Option<Task>) -> Result<Model<f32>> {
    let path = required(weights, "weights")?;
    let model = load_weights(&path)?;
    let trained = model.config().task.task;
    if let Some(task) = task {
        if task != trained {
            return Err(tempokey::Error::ConfigMismatch(format!(
                "{} holds a {trained} model, not a {task} model",
                path.display()
            ))
            .into());
        }
    }
    Ok(model)
}

fn label_text(label: Label) -> String {
    label.to_string()
}

#[derive(Debug, Serialize)]
struct Metrics<'a> {
    task: &'a str,
    n: usize,
    per_dataset: &'a BTreeMap<String, tempokey::evalmod::DatasetScores>,
}

pub fn evaluate_cmd(args: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let task = optional_task(args.task.as_deref(), file)?;
    let model = load_model(args.weights.or(file.weights.clone()), task)?;
    let task = model.config().task.task;
    let manifest = required(args.manifest.or(file.manifest.clone()), "manifest")?;
    let cache_dir = args.cache_dir.or(file.cache_dir.clone());
    let entries = load_manifest(&manifest, task)?;
    let samples = load_samples(&entries, task, cache_dir.as_deref())?;
    let ev = evaluate(&model, &samples)?;
    let metrics = Metrics {
        task: task.name(),
        n: samples.len(),
        per_dataset: &ev.per_dataset,
    };
    let json = to_json(&metrics)?;
    match args.out.or(file.out.clone()) {
        None => println!("{json}"),
        Some(dir) => {
            create_dir(&dir)?;
            write_file(&dir.join("metrics.json"), format!("{json}\n").as_bytes())?;
            let path = dir.join("predictions.csv");
            let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::io(&path, e.into()))?;
            let csv_err = |e: csv::Error| CliError::io(&path, e.into());
            w.write_record(["id", "dataset", "reference", "estimate", "headline", "secondary"]).map_err(csv_err)?;
            for ((p, s), reference) in ev.predictions.iter().zip(&samples).zip(&ev.references) {
                let (a, b) = tempokey::evalmod::score_pair(p.label, *reference)?;
                w.write_record([
                    p.id.as_str(),
                    s.dataset.as_str(),
                    &label_text(*reference),
                    &label_text(p.label),
                    &a.to_string(),
                    &b.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush().map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(())
}

fn write_predictions<W: io::Write>(writer: W, predictions: &[Prediction]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["id", "estimate", "class", "confidence"])?;
    for p in predictions {
        w.write_record([
            p.id.clone(),
            label_text(p.label),
            p.class.to_string(),
            format!("{:.6}", p.distribution[p.class]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn predict(args: PredictArgs, file: &FileConfig) -> Result<()> {
    let task = optional_task(args.task.as_deref(), file)?;
    let model = load_model(args.weights.or(file.weights.clone()), task)?;
    let task = model.config().task.task;
    let cache_dir = args.cache_dir.or(file.cache_dir.clone());
    let mut inputs: Vec<(String, tempokey::Grid)> = Vec::new();
    if let Some(manifest) = args.manifest.or(file.manifest.clone()) {
        for e in load_manifest(&manifest, task)? {
            let s = entry_spectrogram(&e, task, cache_dir.as_deref())?;
            inputs.push((e.id, s.values));
        }
    }
    for path in &args.files {
        let audio = dsp::load_audio(path, data::spectrogram_spec(task).sample_rate)?;
        let id = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        inputs.push((id, data::task_spectrogram(task, &audio)?.values));
    }
    if inputs.is_empty() {
        return Err(CliError::Usage("nothing to predict: give --manifest or audio files".into()));
    }
    let predictions = inputs
        .iter()
        .map(|(id, grid)| predict_track(&model, id, grid))
        .collect::<tempokey::Result<Vec<_>>>()?;
    match args.out.or(file.out.clone()) {
        None => write_predictions(io::stdout().lock(), &predictions).map_err(|e| CliError::io("<stdout>", e.into())),
        Some(path) => {
            let f = File::create(&path).map_err(|e| CliError::io(&path, e))?;
            write_predictions(f, &predictions).map_err(|e| CliError::io(&path, e.into()))
        }
    }
}

pub fn params(args: ParamsArgs, file: &FileConfig) -> Result<usize> {
    let task = parse_task(args.task.as_deref().or(file.task.as_deref()))?;
    let arch_text = match args.arch {
        Some(a) => a,
        None => match file.arch.as_ref().map(|a| a.to_vec()) {
            Some(v) if v.len() == 1 => v[0].clone(),
            Some(_) => return Err(CliError::Usage("params takes a single architecture".into())),
            None => return Err(CliError::Usage("--arch is required (flag or config key)".into())),
        },
    };
    let k = match args.k {
        Some(k) => k,
        None => match file.k.as_ref().map(|k| k.to_vec()) {
            Some(v) if v.len() == 1 => v[0],
            Some(_) => return Err(CliError::Usage("params takes a single k".into())),
            None => 1,
        },
    };
    let mut config = ModelConfig::new(arch_text.parse()?, task, k, 0.0);
    config.arch.long_filter_len = args.long_filter_len.or(file.long_filter_len);
    config.validate()?;
    // parameter counts do not depend on the initial values
    let model = Model::<f32>::build(config, &mut tempokey::rng::stream(0, &[tempokey::rng::STREAM_INIT]))?;
    Ok(model.count_parameters())
}
