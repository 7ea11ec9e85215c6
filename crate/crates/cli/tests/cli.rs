use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempokey::data::load_manifest;
use tempokey::dsp::read_cache;
use tempokey::model::{save_weights, Model};
use tempokey::rng::{stream, STREAM_INIT};
use tempokey::{Arch, KeyLabel, Label, ModelConfig, Task};
use tempokey_cli::{EXIT_DATA, EXIT_DIVERGED, EXIT_OK, EXIT_USAGE};

fn tempokey(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tempokey")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, task: &str, count: usize, seed: u64, duration: f64) -> PathBuf {
    let out = tempokey(&[
        "synth",
        "--task",
        task,
        "--count",
        &count.to_string(),
        "--seed",
        &seed.to_string(),
        "--duration",
        &duration.to_string(),
        "--out",
        s(dir),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));
    dir.join("manifest.csv")
}

#[test]
fn params_prints_counts() {
    for (arch, task, k, expected) in [
        ("shallow-temp", "tempo", "1", "33092"),
        ("deep-square", "key", "1", "5046"),
        ("shallow-spec", "key", "8", "700984"),
    ] {
        let out = tempokey(&["params", "--arch", arch, "--task", task, "--k", k]);
        assert_eq!(code(&out), EXIT_OK);
        assert_eq!(stdout(&out).trim(), expected);
    }
    let half = tempokey(&["params", "--arch", "shallow-temp", "--task", "tempo", "--long-filter-len", "128"]);
    assert_eq!(code(&half), EXIT_OK);
    assert!(stdout(&half).trim().parse::<usize>().unwrap() < 33092);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&tempokey(&["params", "--arch", "wide-net", "--task", "tempo"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["params", "--arch", "shallow-temp"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["params", "--arch", "deep-temp", "--task", "tempo", "--long-filter-len", "9"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["frobnicate"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["synth", "--task", "tempo", "--bogus"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["synth", "--task", "tempo", "--out", "x"])), EXIT_USAGE);
    assert_eq!(code(&tempokey(&["--help"])), EXIT_OK);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let ma = synth(&a, "tempo", 5, 3, 2.0);
    let mb = synth(&b, "tempo", 5, 3, 2.0);
    let mc = synth(&c, "tempo", 5, 4, 2.0);
    assert_eq!(fs::read(&ma).unwrap(), fs::read(&mb).unwrap());
    assert_eq!(fs::read(a.join("tempo00002.wav")).unwrap(), fs::read(b.join("tempo00002.wav")).unwrap());
    assert_ne!(fs::read(&ma).unwrap(), fs::read(&mc).unwrap());
    let entries = load_manifest(&ma, Task::Tempo).unwrap();
    assert_eq!(entries.len(), 5);
    assert!(entries.iter().all(|e| e.path.exists()));
    assert!(entries.iter().all(|e| matches!(e.label, Label::Tempo(60..=180))));
}

#[test]
fn synth_honours_the_tempo_range_and_empty_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = tempokey(&[
        "synth", "--task", "tempo", "--count", "8", "--duration", "1", "--bpm-min", "90", "--bpm-max", "95", "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), EXIT_OK);
    let entries = load_manifest(dir.path().join("manifest.csv"), Task::Tempo).unwrap();
    assert!(entries.iter().all(|e| matches!(e.label, Label::Tempo(90..=95))));

    let empty = dir.path().join("empty");
    let manifest = synth(&empty, "key", 0, 1, 1.0);
    assert!(load_manifest(&manifest, Task::Key).unwrap().is_empty());

    let bad = tempokey(&["synth", "--task", "tempo", "--count", "1", "--bpm-min", "10", "--out", s(dir.path())]);
    assert_eq!(code(&bad), EXIT_USAGE);
}

fn modified(p: &Path) -> std::time::SystemTime {
    fs::metadata(p).unwrap().modified().unwrap()
}

#[test]
fn preprocess_writes_task_caches_once() {
    let dir = tempfile::tempdir().unwrap();
    for (task, bins) in [("tempo", 40), ("key", 192)] {
        let data = dir.path().join(task);
        let cache = dir.path().join(format!("{task}-cache"));
        let manifest = synth(&data, task, 3, 1, 3.0);
        let args = ["preprocess", "--task", task, "--manifest", s(&manifest), "--cache-dir", s(&cache)];
        let first = tempokey(&args);
        assert_eq!(code(&first), EXIT_OK);
        assert!(String::from_utf8_lossy(&first.stderr).contains("written 3"));
        let file = cache.join(format!("{task}00001.tksp"));
        let spec = read_cache(&file).unwrap();
        assert_eq!(spec.n_bins(), bins);
        let stamp = modified(&file);

        let second = tempokey(&args);
        assert_eq!(code(&second), EXIT_OK);
        assert!(String::from_utf8_lossy(&second.stderr).contains("written 0, up to date 3"));
        assert_eq!(modified(&file), stamp);
    }
}

#[test]
fn preprocess_reports_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "tempo", 3, 2, 2.0);
    fs::write(dir.path().join("tempo00001.wav"), b"not a wav").unwrap();
    let cache = dir.path().join("cache");
    let out = tempokey(&["preprocess", "--task", "tempo", "--manifest", s(&manifest), "--cache-dir", s(&cache)]);
    assert_eq!(code(&out), EXIT_DATA);
    assert!(String::from_utf8_lossy(&out.stderr).contains("tempo00001"));
    assert!(cache.join("tempo00000.tksp").exists());
    assert!(cache.join("tempo00002.tksp").exists());
    assert!(!cache.join("tempo00001.tksp").exists());
}

#[test]
fn missing_manifest_is_a_data_error() {
    let out = tempokey(&["preprocess", "--task", "key", "--manifest", "/nonexistent/m.csv", "--cache-dir", "/tmp/x"]);
    assert_eq!(code(&out), EXIT_DATA);
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, "task = \"key\"\narch = \"deep-square\"\nk = 1\n").unwrap();
    let from_file = tempokey(&["--config", s(&config), "params"]);
    assert_eq!(stdout(&from_file).trim(), "5046");
    let overridden = tempokey(&["--config", s(&config), "params", "--task", "tempo"]);
    assert_eq!(stdout(&overridden).trim(), "7134");

    fs::write(&config, "task = \"key\"\nlearning_rate = 0.1\n").unwrap();
    let unknown = tempokey(&["--config", s(&config), "params", "--arch", "deep-square"]);
    assert_eq!(code(&unknown), EXIT_USAGE);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("learning_rate"));

    // relative paths resolve against the config file's directory
    synth(&dir.path().join("corpus"), "tempo", 2, 1, 1.0);
    fs::write(&config, "task = \"tempo\"\nmanifest = \"corpus/manifest.csv\"\ncache_dir = \"cache\"\n").unwrap();
    let pre = tempokey(&["--config", s(&config), "preprocess"]);
    assert_eq!(code(&pre), EXIT_OK, "{}", String::from_utf8_lossy(&pre.stderr));
    assert!(dir.path().join("cache/tempo00000.tksp").exists());
}

fn constant_model(path: &Path, arch: Arch, task: Task) {
    let mut model = Model::build(ModelConfig::new(arch, task, 1, 0.0), &mut stream(0, &[STREAM_INIT])).unwrap();
    let zeros: Vec<Vec<f32>> = model.blobs().iter().map(|b| vec![0.0; b.len()]).collect();
    model.set_blobs(&zeros).unwrap();
    save_weights(&model, path).unwrap();
}

#[test]
fn evaluate_a_class_zero_model() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), "key", 48, 5, 2.0);
    let weights = dir.path().join("zero.tkw");
    constant_model(&weights, Arch::ShallowSpec, Task::Key);
    let out_dir = dir.path().join("eval");
    let out = tempokey(&["evaluate", "--weights", s(&weights), "--manifest", s(&manifest), "--out", s(&out_dir)]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));

    let entries = load_manifest(&manifest, Task::Key).unwrap();
    let c_major: KeyLabel = "C:maj".parse().unwrap();
    let fraction = entries.iter().filter(|e| e.label == Label::Key(c_major)).count() as f64 / entries.len() as f64;
    assert!(fraction > 0.0);
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["n"], 48);
    assert_eq!(metrics["per_dataset"]["synth"]["key_accuracy"].as_f64().unwrap(), fraction);

    let csv = fs::read_to_string(out_dir.join("predictions.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "id,dataset,reference,estimate,headline,secondary");
    assert_eq!(rows.len(), 49);
    assert!(rows[1..].iter().all(|r| r.split(',').nth(3) == Some("c:maj")));

    let stdout_only = tempokey(&["evaluate", "--weights", s(&weights), "--manifest", s(&manifest)]);
    let printed: serde_json::Value = serde_json::from_str(&stdout(&stdout_only)).unwrap();
    assert_eq!(printed, metrics);
}

#[test]
fn evaluate_refuses_a_task_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("tempo.tkw");
    constant_model(&weights, Arch::ShallowTemp, Task::Tempo);
    let manifest = synth(&dir.path().join("data"), "key", 2, 1, 1.0);
    let out = tempokey(&["evaluate", "--weights", s(&weights), "--task", "key", "--manifest", s(&manifest)]);
    assert_eq!(code(&out), EXIT_USAGE);
    let missing = tempokey(&["evaluate", "--weights", s(&dir.path().join("nope.tkw")), "--manifest", s(&manifest)]);
    assert_eq!(code(&missing), EXIT_DATA);
}

#[test]
fn train_evaluate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), "tempo", 20, 7, 16.0);
    let cache = dir.path().join("cache");
    assert_eq!(code(&tempokey(&["preprocess", "--task", "tempo", "--manifest", s(&manifest), "--cache-dir", s(&cache)])), EXIT_OK);
    let out_dir = dir.path().join("run");
    let out = tempokey(&[
        "train", "--task", "tempo", "--arch", "shallow-temp", "--k", "1", "--dropout", "0.1,0.5", "--runs", "2",
        "--epochs", "2", "--seed", "11", "--manifest", s(&manifest), "--cache-dir", s(&cache), "--out", s(&out_dir),
        "--val-fraction", "0.2", "--test-fraction", "0.2", "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", String::from_utf8_lossy(&out.stderr));

    let report = fs::read_to_string(out_dir.join("report.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = report.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0]["p_D"], 0.1);
    assert_eq!(lines[1]["seed"], 12);
    assert!(lines.iter().all(|l| l["epochs"] == 2 && l["param_count"] == 33092));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["n_test"], 4);
    assert_eq!(summary["configurations"].as_array().unwrap().len(), 2);
    assert_eq!(summary["selected"].as_array().unwrap().len(), 1);

    let weights = out_dir.join("weights/shallow-temp-k1-p0.5-seed11.tkw");
    assert!(weights.exists());
    assert!(out_dir.join("weights/shallow-temp-k1-p0.5-seed11.history.jsonl").exists());

    let eval_dir = dir.path().join("eval");
    let ev = tempokey(&["evaluate", "--weights", s(&weights), "--manifest", s(&manifest), "--cache-dir", s(&cache), "--out", s(&eval_dir)]);
    assert_eq!(code(&ev), EXIT_OK);
    assert!(eval_dir.join("metrics.json").exists());

    let wav = dir.path().join("data/tempo00003.wav");
    let predictions = dir.path().join("pred.csv");
    let p = tempokey(&["predict", "--weights", s(&weights), "--out", s(&predictions), s(&wav)]);
    assert_eq!(code(&p), EXIT_OK, "{}", String::from_utf8_lossy(&p.stderr));
    let text = fs::read_to_string(&predictions).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "id,estimate,class,confidence");
    assert!(rows[1].starts_with("tempo00003,"));
    let again = tempokey(&["predict", "--weights", s(&weights), s(&wav)]);
    assert_eq!(stdout(&again), text);

    let by_manifest = tempokey(&["predict", "--weights", s(&weights), "--manifest", s(&manifest), "--cache-dir", s(&cache)]);
    assert_eq!(stdout(&by_manifest).lines().count(), 21);
    assert_eq!(code(&tempokey(&["predict", "--weights", s(&weights)])), EXIT_USAGE);
}

#[test]
fn divergence_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(&dir.path().join("data"), "tempo", 6, 3, 16.0);
    let out = tempokey(&[
        "train", "--task", "tempo", "--manifest", s(&manifest), "--out", s(&dir.path().join("run")), "--lr", "1e38",
        "--epochs", "3", "--val-fraction", "0.34", "--test-fraction", "0", "--quiet",
    ]);
    assert_eq!(code(&out), EXIT_DIVERGED, "{}", String::from_utf8_lossy(&out.stderr));
}
